#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qmn/physics.hpp"

using namespace qmn;

namespace {

SpinCoupling random_coupling(std::mt19937_64& rng, Species sp, const PhysicalConstants& pc) {
  std::uniform_real_distribution<double> a(-2e5, 2e5);
  return {{a(rng), a(rng), a(rng)}, pc.larmor(sp)};
}

}  // namespace

TEST(Physics, TransitionFrequenciesMatchEigenSplitting) {
  std::mt19937_64 rng(11);
  const PhysicalConstants pc;
  for (Species sp : {Species::C13, Species::Si29})
    for (int i = 0; i < 2000; ++i) {
      const SpinCoupling sc = random_coupling(rng, sp, pc);
      const auto tf = transition_frequencies(sc);
      EXPECT_NEAR(tf.omega1 / oracle::eigen_splitting(1.5, sc), 1.0, 1e-9);
      EXPECT_NEAR(tf.omega2 / oracle::eigen_splitting(0.5, sc), 1.0, 1e-9);
    }
}

TEST(Physics, TiltedFrameReproducesConditionalHamiltonian) {
  std::mt19937_64 rng(3);
  const PhysicalConstants pc;
  for (int i = 0; i < 200; ++i) {
    const SpinCoupling sc = random_coupling(rng, i % 2 ? Species::C13 : Species::Si29, pc);
    for (ElectronLevel l : {ElectronLevel::ms_3_2, ElectronLevel::ms_1_2}) {
      const TiltedFrame f = tilted_frame(l, sc);
      const Mat2 h = conditional_hamiltonian(l, sc);
      EXPECT_LT((f.omega * f.iz - h).norm(), 1e-9 * f.omega);
      EXPECT_NEAR(f.beta, tilt_angle(l, sc), 1e-15);
    }
  }
}

TEST(Physics, OnAxisHyperfineIsTwicePrefactor) {
  const PhysicalConstants pc;
  const double r = 0.8;
  const HyperfineVector hv = hyperfine_vector(Vec3(0, 0, r), gyromagnetic_ratio(Species::C13), pc);
  const double pref = oracle::mu0_over_4pi * oracle::planck * pc.gamma_e * gyromagnetic_ratio(Species::C13) / std::pow(r * 1e-9, 3);
  EXPECT_NEAR(hv.a_par / (2.0 * pref), 1.0, 1e-12);
  EXPECT_NEAR(hv.a_perp(), 0.0, 1e-9);
}

TEST(Physics, MagicAngleHasNoParallelCoupling) {
  const double th = std::acos(1.0 / std::sqrt(3.0));
  const HyperfineVector hv = hyperfine_vector(Vec3(std::sin(th), 0, std::cos(th)), gyromagnetic_ratio(Species::C13));
  EXPECT_NEAR(hv.a_par, 0.0, 1e-6 * hv.a_perp());
  EXPECT_GT(hv.a_perp(), 0.0);
}

TEST(Physics, HyperfineScalesAsInverseCube) {
  const Vec3 dir = Vec3(0.3, -0.2, 0.9).normalized();
  const auto a = hyperfine_vector(dir, gyromagnetic_ratio(Species::Si29));
  const auto b = hyperfine_vector(2.0 * dir, gyromagnetic_ratio(Species::Si29));
  EXPECT_NEAR(a.a_par / b.a_par, 8.0, 1e-10);
  EXPECT_NEAR(a.a_xz / b.a_xz, 8.0, 1e-10);
}

TEST(Physics, LarmorAt500Gauss) {
  const PhysicalConstants pc;
  EXPECT_NEAR(pc.larmor(Species::C13), 535.5e3, 1.0);
  EXPECT_NEAR(pc.larmor(Species::Si29), -423.0e3, 1.0);
}

TEST(Physics, NoHyperfineGivesLarmorForBothLevels) {
  const SpinCoupling sc{{0, 0, 0}, 535.5e3};
  const auto tf = transition_frequencies(sc);
  EXPECT_DOUBLE_EQ(tf.omega1, 535.5e3);
  EXPECT_DOUBLE_EQ(tf.omega2, 535.5e3);
}

TEST(Physics, TooCloseSpinRejected) {
  EXPECT_THROW(hyperfine_vector(Vec3(0, 0, 0.01), gyromagnetic_ratio(Species::C13)), std::invalid_argument);
}

TEST(Physics, RotatingFrameFieldOnResonanceIsTransverse) {
  const SpinCoupling sc{{20e3, 8e3, 0}, 535.5e3};
  const TiltedFrame f = tilted_frame(ElectronLevel::ms_3_2, sc);
  const Vec3 b = rotating_frame_field(f, {f.omega, 0.3, 100.0});
  EXPECT_NEAR(b.dot(f.z_axis()), 0.0, 1e-9);
  EXPECT_NEAR(b.norm(), 100.0 * std::cos(f.beta), 1e-9);
  const Mat2 h = rotating_frame_hamiltonian(ElectronLevel::ms_3_2, sc, {f.omega, 0.3, 100.0});
  EXPECT_LT((h - (b.x() * spin::Ix() + b.y() * spin::Iy() + b.z() * spin::Iz())).norm(), 1e-9);
}

TEST(Physics, RotatingWaveBound) {
  EXPECT_TRUE(rotating_wave_ok(1e3, 423e3));
  EXPECT_FALSE(rotating_wave_ok(30e3, 423e3));
  EXPECT_TRUE(rotating_wave_ok(21e3, -423e3));
}
