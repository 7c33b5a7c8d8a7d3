#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qmn/detection.hpp"

using namespace qmn;

namespace {

constexpr double pi = std::numbers::pi;

SpinCoupling c13_at(const Vec3& r) { return coupling_of(make_spin(Species::C13, r)); }

}  // namespace

TEST(Detection, DefaultRabiGivesPiRelativeRotation) {
  const DetectionParams d;
  EXPECT_NEAR(d.rabi(), 1.0 / (4.0 * 100 * 93e-6), 1e-12);
  EXPECT_NEAR(d.resolution_hz(), 1.0 / (2.0 * 100 * 93e-6), 1e-12);
}

TEST(Detection, ReadoutAmplitudeAgreesWithTraceOverlap) {
  std::mt19937_64 rng(8);
  const DetectionParams d;
  for (int i = 0; i < 30; ++i) {
    const SpinCoupling sc = coupling_of(oracle::random_spin(rng, 0.4, 2.5));
    DdrfParams p = d.resonant(sc);
    p.n_pi = 1 + i % 7;
    const auto both = contrast_both(p, sc);
    EXPECT_NEAR(both.from_overlap, both.from_readout, 1e-9);
  }
}

TEST(Detection, ReadoutNeedsEnoughPhases) {
  EXPECT_THROW(readout_from_coherence(1.0, false, 12), std::invalid_argument);
}

TEST(Detection, UndrivenReadoutHasFullOscillation) {
  const auto sig = readout_from_coherence(1.0, false, 36);
  EXPECT_NEAR(sig.oscillation_amplitude(), 0.5, 1e-12);
  EXPECT_NEAR(sig.contrast(), 0.0, 1e-12);
}

TEST(Detection, BathOverlapFactorisesOverSpins) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<SpinCoupling> bath;
    for (int k = 0; k < 3; ++k) bath.push_back(coupling_of(oracle::random_spin(rng, 0.5, 1.5)));
    const DetectionParams d;
    const DdrfParams p = d.resonant(bath[0]);
    const PhaseSchedule s = targeted_schedule(p, bath[0]);
    oracle::MX big32 = oracle::MX::Identity(1, 1), big12 = big32;
    for (const auto& sc : bath) {
      const auto cu = ddrf_unitary(p, sc, s, Frame::lab);
      big32 = oracle::kron(big32, cu.u_32);
      big12 = oracle::kron(big12, cu.u_12);
    }
    const cplx full = (big12.adjoint() * big32).trace() / 8.0;
    const auto sig = readout_signal(p, bath, s);
    EXPECT_NEAR(sig.contrast(), 1.0 - std::abs(full), 1e-9);
  }
}

TEST(Detection, OnAxisContrastFallsWithDistance) {
  const DetectionParams d;
  double prev = 2.0;
  for (double r : {0.6, 1.0, 1.5, 2.5, 4.0}) {
    const double c = resonant_contrast(d, c13_at(Vec3(0, 0, r)));
    EXPECT_LE(c, prev + 1e-9);
    prev = c;
  }
  EXPECT_GT(resonant_contrast(d, c13_at(Vec3(0, 0, 0.6))), 0.5);
  EXPECT_LT(resonant_contrast(d, c13_at(Vec3(0, 0, 4.0))), 0.1);
}

TEST(Detection, ContrastMapLayoutAndValidation) {
  const DetectionParams d;
  const std::vector<double> r = {0.5, 1.0}, th = {0.0, 0.5 * pi, pi};
  const auto m = contrast_map(Species::C13, d, r, th);
  ASSERT_EQ(m.size(), 6u);
  EXPECT_EQ(m[4].r, 1.0);
  EXPECT_EQ(m[4].theta, 0.5 * pi);
  EXPECT_NEAR(m[0].contrast, resonant_contrast(d, c13_at(Vec3(0, 0, 0.5))), 1e-15);
  EXPECT_THROW(contrast_map(Species::C13, d, {0.05}, th), std::invalid_argument);
}

TEST(Detection, SpectrumDipsAtBothTransitions) {
  const SpinCoupling sc = c13_at(Vec3(0.3, 0, 0.8));
  const auto tf = transition_frequencies(sc);
  DetectionParams d;
  d.n_pi = 20;
  d.tau_n = 46e-6;
  const auto pts = spectrum({sc}, {tf.omega1, tf.omega2, 0.5 * (tf.omega1 + tf.omega2)}, d);
  EXPECT_GT(pts[0].contrast, 0.5);
  EXPECT_GT(pts[1].contrast, 0.5);
  EXPECT_LT(pts[2].contrast, pts[0].contrast);
}

TEST(Detection, WindowedSpectrumMatchesExact) {
  std::mt19937_64 rng(17);
  std::vector<SpinCoupling> bath;
  for (int k = 0; k < 6; ++k) bath.push_back(coupling_of(oracle::random_spin(rng, 0.6, 2.0)));
  const DetectionParams d;  // long default sequence: lines a few tens of Hz wide
  const auto grid = spectrum_grid(bath, 2.5e4, 100.0);
  const auto exact = spectrum(bath, grid, d);
  auto worst = [&](double window) {
    const auto fast = spectrum(bath, grid, d, 1, window);
    double w = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) w = std::max(w, std::abs(exact[i].contrast - fast[i].contrast));
    return w;
  };
  // truncation error follows the filter tail, about 1 / (window * sequence length)
  const double t = 2.0 * d.n_pi * d.tau_n;
  EXPECT_LT(worst(2e3), 4.0 / (2e3 * t));
  EXPECT_LT(worst(2e4), 4.0 / (2e4 * t));
  EXPECT_LT(worst(2e4), worst(2e3));
  EXPECT_THROW(spectrum(bath, grid, d, 1, 0.0), std::invalid_argument);
}

TEST(Detection, SpectrumDeterministicAcrossThreads) {
  std::vector<SpinCoupling> bath = {c13_at(Vec3(0.3, 0, 0.8)), c13_at(Vec3(-0.5, 0.2, 0.4))};
  const auto grid = spectrum_grid(bath, 500.0, 100.0);
  const auto a = spectrum(bath, grid, DetectionParams{}, 1);
  const auto b = spectrum(bath, grid, DetectionParams{}, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].contrast, b[i].contrast);
  EXPECT_THROW(spectrum(bath, {}, DetectionParams{}), std::invalid_argument);
}

TEST(Detection, IsolatedStrongSpinIsAccessible) {
  SpinBath bath;
  bath.spins.push_back(make_spin(Species::C13, Vec3(0.2, 0, 0.7)));
  const auto e = accessible_qubits(bath, DetectionParams{});
  EXPECT_EQ(e.criterion_i.size(), 1u);
  EXPECT_EQ(e.accessible.size(), 1u);
  EXPECT_NEAR(e.sensing_radius_nm, bath.spins[0].position.norm(), 1e-15);
}

TEST(Detection, MirrorImageSpinsBlockEachOther) {
  SpinBath bath;
  bath.spins.push_back(make_spin(Species::C13, Vec3(0.2, 0, 0.7)));
  bath.spins.push_back(make_spin(Species::C13, Vec3(-0.2, 0, 0.7)));
  const auto e = accessible_qubits(bath, DetectionParams{});
  EXPECT_EQ(e.criterion_i.size(), 2u);
  EXPECT_EQ(e.accessible.size(), 0u);
}

TEST(Detection, WeakSpinInsideSensingRadiusStillConflicts) {
  // A strong spin plus a weak one tuned to the same w1: the weak spin sits
  // inside the sensing radius, so it blocks the strong one.
  SpinBath bath;
  bath.spins.push_back(make_spin(Species::C13, Vec3(0.0, 0, 0.9)));
  const double th = std::acos(1.0 / std::sqrt(3.0));
  bath.spins.push_back(make_spin(Species::C13, 0.5 * Vec3(std::sin(th), 0, std::cos(th))));
  DetectionParams d;
  d.resolution_scale = 1e6;  // everything overlaps
  const auto e = accessible_qubits(bath, d);
  EXPECT_TRUE(e.accessible.empty());
}

TEST(Detection, AggregateStatistics) {
  std::vector<CensusEntry> entries(4);
  entries[0].accessible.resize(2);
  entries[1].accessible.resize(6);
  entries[2].accessible.resize(6);
  entries[3].accessible.resize(0);
  entries[1].criterion_i.resize(9);
  const auto a = aggregate_census(0.01, DetectionParams{}, entries);
  EXPECT_DOUBLE_EQ(a.mean_accessible, 3.5);
  EXPECT_DOUBLE_EQ(a.mean_criterion_i, 9.0 / 4.0);
  EXPECT_DOUBLE_EQ(a.p_at_least(1), 0.75);
  EXPECT_DOUBLE_EQ(a.p_at_least(6), 0.5);
  EXPECT_DOUBLE_EQ(a.p_at_least(7), 0.0);
  EXPECT_EQ(a.histogram.at(6), 2u);
  EXPECT_THROW(a.p_at_least(0), std::out_of_range);
}

TEST(Detection, CensusIsDeterministicAndSharesRandomness) {
  CensusSettings s;
  s.volume_nm3 = 120.0;
  s.realizations = 6;
  s.master_seed = 9;
  s.threads = 1;
  const std::vector<double> conc = {0.01, 0.03};
  const auto a = census_campaign(conc, {DetectionParams{}}, s);
  s.threads = 4;
  const auto b = census_campaign(conc, {DetectionParams{}}, s);
  for (std::size_t c = 0; c < conc.size(); ++c) EXPECT_EQ(a[c][0].counts, b[c][0].counts);
  s.realizations = 0;
  EXPECT_THROW(census_campaign(conc, {DetectionParams{}}, s), std::invalid_argument);
}

TEST(Detection, RealizationSeedsDependOnlyOnIndex) {
  EXPECT_EQ(realization_seed(1, 5), realization_seed(1, 5));
  EXPECT_NE(realization_seed(1, 5), realization_seed(1, 6));
  EXPECT_NE(realization_seed(1, 5), realization_seed(2, 5));
}
