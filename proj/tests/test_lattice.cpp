#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "qmn/lattice.hpp"

using namespace qmn;

TEST(Lattice, CellVolumeMatchesHexagonalFormula) {
  const LatticeSpec s;
  EXPECT_NEAR(s.cell_volume(), s.a * s.a * s.c * std::sqrt(3.0) / 2.0, 1e-12);
}

TEST(Lattice, UnitCellCountAt680) {
  const double n = unit_cell_count(LatticeSpec{}, 680.0);
  EXPECT_NEAR(n, 8200.0, 200.0);
}

TEST(Lattice, SiteCountTracksEightAtomsPerCell) {
  const auto sites = generate_supercell(LatticeSpec{}, 680.0);
  const double expected = 8.0 * unit_cell_count(LatticeSpec{}, 680.0);
  EXPECT_NEAR(static_cast<double>(sites.size()) / expected, 1.0, 0.02);
  std::size_t si = 0;
  for (const auto& s : sites) si += s.element == Element::Si;
  EXPECT_EQ(si * 2, sites.size());
}

TEST(Lattice, SitesAreDistinctAndInsideCube) {
  const auto sites = generate_supercell(LatticeSpec{}, 30.0);
  const double half = cube_half_side(30.0);
  std::set<std::tuple<long, long, long>> seen;
  for (const auto& s : sites) {
    EXPECT_TRUE(inside_cube(s.position, half));
    seen.insert({std::lround(s.position.x() * 1e6), std::lround(s.position.y() * 1e6), std::lround(s.position.z() * 1e6)});
  }
  EXPECT_EQ(seen.size(), sites.size());
}

TEST(Lattice, NearestSiCNeighbourIsBondLength) {
  const auto sites = generate_supercell(LatticeSpec{}, 30.0);
  double best = 1e9;
  for (const auto& s : sites)
    if (s.element == Element::C) best = std::min(best, s.position.norm());
  // Si-C bond in 4H-SiC is ~0.189 nm.
  EXPECT_NEAR(best, 0.1885, 0.003);
}

TEST(Lattice, VacancyIsNeverOccupied) {
  const auto sites = generate_supercell(LatticeSpec{}, 30.0);
  const SpinBath b = sample_bath(sites, {1.0, 1.0, 7});
  EXPECT_EQ(b.size(), sites.size() - 1);
  for (const auto& s : b.spins) EXPECT_GT(s.position.norm(), kVacancyTolerance);
}

TEST(Lattice, EmpiricalIsotopeFractionWithinThreeSigma) {
  const auto sites = generate_supercell(LatticeSpec{}, 100.0);
  std::size_t nc = 0, nsi = 0;
  for (const auto& s : sites) (s.element == Element::C ? nc : nsi)++;
  const IsotopeConfig base{0.011, 0.047, 0};
  double c13 = 0, si29 = 0;
  constexpr int seeds = 100;
  for (int k = 0; k < seeds; ++k) {
    IsotopeConfig c = base;
    c.rng_seed = static_cast<std::uint64_t>(k);
    const auto st = bath_statistics(sample_bath(sites, c));
    c13 += static_cast<double>(st.c13_count);
    si29 += static_cast<double>(st.si29_count);
  }
  const double n_c = static_cast<double>(nc) * seeds, n_si = static_cast<double>(nsi - 1) * seeds;
  EXPECT_LT(std::abs(c13 - n_c * 0.011), 3.0 * std::sqrt(n_c * 0.011 * 0.989));
  EXPECT_LT(std::abs(si29 - n_si * 0.047), 3.0 * std::sqrt(n_si * 0.047 * 0.953) + 3.0);
}

TEST(Lattice, ConcentrationSplit) {
  auto [c, s] = concentration_split(0.01);
  EXPECT_DOUBLE_EQ(c, 0.005);
  EXPECT_DOUBLE_EQ(s, 0.005);
  std::tie(c, s) = concentration_split(0.058);
  EXPECT_DOUBLE_EQ(c, 0.011);
  EXPECT_NEAR(s, 0.047, 1e-15);
  EXPECT_THROW(concentration_split(-0.1), std::invalid_argument);
}

TEST(Lattice, SameSeedSameBath) {
  const auto sites = generate_supercell(LatticeSpec{}, 100.0);
  const auto a = sample_bath(sites, {0.05, 0.05, 42});
  const auto b = sample_bath(sites, {0.05, 0.05, 42});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.spins[i].position, b.spins[i].position);
}

TEST(Lattice, LowerConcentrationIsSubsetUnderSharedSeed) {
  const auto sites = generate_supercell(LatticeSpec{}, 100.0);
  const auto lo = sample_bath(sites, {0.005, 0.005, 3});
  const auto hi = sample_bath(sites, {0.011, 0.02, 3});
  std::set<std::tuple<double, double, double>> h;
  for (const auto& s : hi.spins) h.insert({s.position.x(), s.position.y(), s.position.z()});
  for (const auto& s : lo.spins) EXPECT_TRUE(h.count({s.position.x(), s.position.y(), s.position.z()}));
}

TEST(Lattice, BathJsonRoundTrip) {
  const auto sites = generate_supercell(LatticeSpec{}, 50.0);
  const auto b = sample_bath(sites, {0.1, 0.1, 5});
  const auto back = bath_from_json(bath_to_json(b));
  ASSERT_EQ(back.size(), b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(back.spins[i].species, b.spins[i].species);
    EXPECT_EQ(back.spins[i].position, b.spins[i].position);
  }
}

TEST(Lattice, RejectsBadInput) {
  EXPECT_THROW(generate_supercell(LatticeSpec{}, 0.0), std::invalid_argument);
  EXPECT_THROW(generate_supercell(LatticeSpec{}, 0.01), std::invalid_argument);
  LatticeSpec bad;
  bad.basis.pop_back();
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(IsotopeConfig({1.5, 0.0, 0}).validate(), std::invalid_argument);
}
