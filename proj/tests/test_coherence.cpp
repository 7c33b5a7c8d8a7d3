#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qmn/coherence.hpp"

using namespace qmn;

namespace {

SpinBath bath_of(std::vector<NuclearSpin> spins) {
  SpinBath b;
  b.spins = std::move(spins);
  return b;
}

/// Second spin within `max_sep` nm of the first, both well away from the defect.
std::vector<NuclearSpin> random_pair(std::mt19937_64& rng, double max_sep) {
  const NuclearSpin a = oracle::random_spin(rng, 0.6, 1.5);
  NuclearSpin b;
  do {
    const NuclearSpin off = oracle::random_spin(rng, 0.25, max_sep);
    b = make_spin(off.species, a.position + off.position);
  } while (b.position.norm() < 0.4);
  return {a, b};
}

CoherenceCurve synthetic(double t2, double n, std::size_t points, double t_max) {
  CoherenceCurve c;
  for (std::size_t i = 1; i <= points; ++i) {
    const double t = t_max * static_cast<double>(i) / static_cast<double>(points);
    c.times.push_back(t);
    c.l_values.push_back(std::exp(-std::pow(t / t2, n)));
  }
  return c;
}

}  // namespace

TEST(Coherence, SingleSpinMatchesExact) {
  std::mt19937_64 rng(31);
  const PhysicalConstants pc;
  CceOptions opt;
  opt.order = 1;
  for (int i = 0; i < 20; ++i) {
    const NuclearSpin s = oracle::random_spin(rng, 0.4, 2.0);
    const int n_pi = 1 + i % 5;
    const std::vector<double> taus = {3e-6, 11e-6, 40e-6};
    for (std::uint8_t st : {0, 1}) {
      const auto c = cce_coherence(bath_of({s}), n_pi, taus, {st}, opt, pc);
      for (std::size_t t = 0; t < taus.size(); ++t)
        EXPECT_LT(std::abs(c.l_values[t] - oracle::cpmg_coherence({s}, n_pi, taus[t], {st}, pc)), 1e-10);
    }
  }
}

TEST(Coherence, PairMatchesExact) {
  std::mt19937_64 rng(32);
  const PhysicalConstants pc;
  for (int i = 0; i < 20; ++i) {
    const auto spins = random_pair(rng, 1.0);
    const int n_pi = 1 + i % 4;
    const std::vector<double> taus = {5e-6, 50e-6, 400e-6};
    const CceTables tab(bath_of(spins), n_pi, taus, {}, pc);
    ASSERT_EQ(tab.pair_count(), 1u);
    for (std::uint8_t a : {0, 1})
      for (std::uint8_t b : {0, 1}) {
        const auto c = tab.evaluate({a, b});
        for (std::size_t t = 0; t < taus.size(); ++t)
          EXPECT_LT(std::abs(c.l_values[t] - oracle::cpmg_coherence(spins, n_pi, taus[t], {a, b}, pc)), 1e-8);
      }
  }
}

TEST(Coherence, MixedStateIsTraceAverage) {
  std::mt19937_64 rng(33);
  const PhysicalConstants pc;
  const auto spins = random_pair(rng, 0.8);
  const std::vector<double> taus = {20e-6, 200e-6};
  const CceTables tab(bath_of(spins), 1, taus, {}, pc);
  const auto m = tab.mixed();
  for (std::size_t t = 0; t < taus.size(); ++t) {
    cplx avg = 0.0;
    for (int a : {0, 1})
      for (int b : {0, 1}) avg += 0.25 * oracle::cpmg_coherence(spins, 1, taus[t], {a, b}, pc);
    EXPECT_LT(std::abs(m.l_values[t] - avg), 1e-8);
  }
}

TEST(Coherence, PairCutoffRule) {
  // Two distant, weakly coupled spins: no pair. Raising the cutoff adds it.
  const NuclearSpin a = make_spin(Species::Si29, Vec3(0, 0, 3.0));
  const NuclearSpin b = make_spin(Species::Si29, Vec3(2.5, 0, 3.0));
  const std::vector<double> taus = {1e-5};
  EXPECT_EQ(CceTables(bath_of({a, b}), 1, taus).pair_count(), 0u);
  CceOptions wide;
  wide.pair_cutoff_nm = 4.0;
  EXPECT_EQ(CceTables(bath_of({a, b}), 1, taus, wide).pair_count(), 1u);
  // Both strongly coupled: kept whatever the distance.
  const NuclearSpin c = make_spin(Species::C13, Vec3(0, 0, 0.5));
  const NuclearSpin d = make_spin(Species::C13, Vec3(0, 0, -0.5));
  CceOptions tight;
  tight.pair_cutoff_nm = 0.1;
  EXPECT_EQ(CceTables(bath_of({c, d}), 1, taus, tight).pair_count(), 1u);
}

TEST(Coherence, OrderOneIgnoresPairs) {
  std::mt19937_64 rng(34);
  const auto spins = random_pair(rng, 0.8);
  CceOptions o1;
  o1.order = 1;
  const std::vector<double> taus = {1e-5, 1e-4};
  const auto c = cce_coherence(bath_of(spins), 2, taus, {0, 1}, o1);
  const auto a = cce_coherence(bath_of({spins[0]}), 2, taus, {0}, o1);
  const auto b = cce_coherence(bath_of({spins[1]}), 2, taus, {1}, o1);
  for (std::size_t t = 0; t < taus.size(); ++t) EXPECT_LT(std::abs(c.l_values[t] - a.l_values[t] * b.l_values[t]), 1e-14);
}

TEST(Coherence, ThreadCountDoesNotChangeResult) {
  const auto sites = generate_supercell(LatticeSpec{}, 27.0);
  const SpinBath bath = spherical_bath(sites, {0.05, 0.05, 3}, 1.5);
  const auto taus = uniform_tau_grid(1, 2e-3, 10);
  CceOptions a, b;
  b.threads = 4;
  const auto ca = CceTables(bath, 1, taus, a).average(3, 7);
  const auto cb = CceTables(bath, 1, taus, b).average(3, 7);
  for (std::size_t t = 0; t < taus.size(); ++t) EXPECT_EQ(ca.l_values[t], cb.l_values[t]);
}

TEST(Coherence, StateAveragingModesAgreeForSingleState) {
  const auto sites = generate_supercell(LatticeSpec{}, 27.0);
  const SpinBath bath = spherical_bath(sites, {0.05, 0.05, 4}, 1.5);
  const auto taus = uniform_tau_grid(1, 2e-3, 10);
  const CceTables tab(bath, 1, taus);
  const auto a = tab.average(1, 5, StateAveraging::per_cluster);
  const auto b = tab.average(1, 5, StateAveraging::per_state);
  for (std::size_t t = 0; t < taus.size(); ++t) EXPECT_LT(std::abs(a.l_values[t] - b.l_values[t]), 1e-12);
}

TEST(Coherence, FitRecoversSyntheticParameters) {
  for (auto [t2, n] : {std::pair{2e-3, 1.0}, std::pair{2e-3, 2.5}, std::pair{0.5e-3, 1.6}}) {
    const T2Fit f = fit_t2(synthetic(t2, n, 40, 3.0 * t2));
    EXPECT_NEAR(f.t2 / t2, 1.0, 1e-6);
    EXPECT_NEAR(f.stretch_exponent / n, 1.0, 1e-6);
    EXPECT_LT(f.residual, 1e-8);
  }
}

TEST(Coherence, FitToleratesRipple) {
  CoherenceCurve c = synthetic(1.5e-3, 2.0, 60, 4e-3);
  for (std::size_t i = 0; i < c.l_values.size(); ++i) c.l_values[i] *= 1.0 + 0.01 * std::sin(1.3 * static_cast<double>(i));
  const T2Fit f = fit_t2(c);
  EXPECT_NEAR(f.t2 / 1.5e-3, 1.0, 0.03);
  EXPECT_NEAR(f.stretch_exponent / 2.0, 1.0, 0.1);
}

TEST(Coherence, FitRejectsFlatAndShortCurves) {
  EXPECT_THROW(fit_t2(synthetic(1.0, 2.0, 20, 1e-3)), NoDecayError);
  EXPECT_THROW(fit_t2(synthetic(1e-3, 2.0, 5, 3e-3)), std::invalid_argument);
}

TEST(Coherence, DipolarTensorIsTracelessAndSymmetric) {
  const Mat3 d = dipolar_tensor(make_spin(Species::C13, Vec3(0, 0, 1)), make_spin(Species::Si29, Vec3(0.3, 0.1, 1.2)));
  EXPECT_NEAR(d.trace(), 0.0, 1e-9 * d.norm());
  EXPECT_LT((d - d.transpose()).norm(), 1e-12 * d.norm());
}

TEST(Coherence, Helpers) {
  EXPECT_DOUBLE_EQ(median_of({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median_of({4.0, 1.0, std::nan(""), 2.0, 3.0}), 2.5);
  EXPECT_TRUE(std::isnan(median_of({std::nan("")})));
  const auto g = uniform_tau_grid(10, 1e-3, 4);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_NEAR(2.0 * 10 * g.back(), 1e-3, 1e-18);
  EXPECT_THROW(uniform_tau_grid(0, 1e-3, 4), std::invalid_argument);
  EXPECT_THROW(CceTables(SpinBath{}, 1, {2e-6, 1e-6}), std::invalid_argument);
}
