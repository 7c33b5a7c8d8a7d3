#pragma once

// Hyperfine couplings and conditional nuclear Hamiltonians for a nuclear spin
// next to the V_Si- electron spin, restricted to the {|3/2>, |1/2>} electron
// subspace. All outputs are in Hz.

#include <cmath>
#include <optional>
#include <stdexcept>

#include "qmn/lattice.hpp"
#include "qmn/linalg.hpp"

namespace qmn {

inline constexpr double kPlanck = 6.62607015e-34;     // J s
inline constexpr double kMu0Over4Pi = 1.00000000055e-7;  // T m / A

struct PhysicalConstants {
  double b0_tesla = 0.05;
  /// Electron gyromagnetic ratio for g = 2.00, Hz/T.
  double gamma_e = 28.02e9;
  // Diagonal in the electron basis and common to both conditional blocks, so
  // they never enter the nuclear dynamics. Carried for bookkeeping only.
  std::optional<double> zero_field_splitting_hz;
  double electron_zeeman_hz() const { return gamma_e * b0_tesla; }

  double larmor(double gamma_n) const { return gamma_n * b0_tesla; }
  double larmor(Species s) const { return larmor(gyromagnetic_ratio(s)); }
};

enum class ElectronLevel { ms_3_2, ms_1_2 };

constexpr double projection(ElectronLevel l) { return l == ElectronLevel::ms_3_2 ? 1.5 : 0.5; }
constexpr ElectronLevel other(ElectronLevel l) {
  return l == ElectronLevel::ms_3_2 ? ElectronLevel::ms_1_2 : ElectronLevel::ms_3_2;
}

/// Secular hyperfine components (Hz).
struct HyperfineVector {
  double a_par = 0.0;  // A_zz
  double a_xz = 0.0;
  double a_yz = 0.0;

  double a_perp() const { return std::hypot(a_xz, a_yz); }
};

/// Point-dipole coupling prefactor (mu0/4pi) h gamma_1 gamma_2 / r^3 in Hz
/// for gyromagnetic ratios in Hz/T and r in nm.
inline double dipolar_prefactor(double gamma_1, double gamma_2, double r_nm) {
  const double r = r_nm * 1e-9;
  return kMu0Over4Pi * kPlanck * gamma_1 * gamma_2 / (r * r * r);
}

inline constexpr double kMinHyperfineDistanceNm = 0.05;

/// Electron-nuclear dipolar tensor row A_z. = pref (3 n_z n_i - delta_zi).
inline HyperfineVector hyperfine_vector(const Vec3& position_nm, double gamma_n,
                                        const PhysicalConstants& pc = {}) {
  const double r = position_nm.norm();
  if (!(r > kMinHyperfineDistanceNm))
    throw std::invalid_argument("nuclear spin too close to the defect for a point-dipole coupling");
  const Vec3 n = position_nm / r;
  const double pref = dipolar_prefactor(pc.gamma_e, gamma_n, r);
  return {pref * (3.0 * n.z() * n.z() - 1.0), pref * 3.0 * n.x() * n.z(), pref * 3.0 * n.y() * n.z()};
}

/// Everything single-spin dynamics needs: hyperfine vector plus Larmor frequency.
struct SpinCoupling {
  HyperfineVector hv;
  double larmor_hz = 0.0;  // gamma_n B0, signed
};

inline SpinCoupling coupling_of(const NuclearSpin& s, const PhysicalConstants& pc = {}) {
  return {hyperfine_vector(s.position, s.gamma_n, pc), pc.larmor(s.gamma_n)};
}

/// H = w_L I_z + m_s (A_par I_z + A_perp I_x)
inline Mat2 conditional_hamiltonian(ElectronLevel level, const SpinCoupling& sc) {
  const double ms = projection(level);
  return (sc.larmor_hz + ms * sc.hv.a_par) * spin::Iz() + (ms * sc.hv.a_perp()) * spin::Ix();
}

/// Longitudinal and transverse field components of the conditional Hamiltonian.
inline Vec3 conditional_field(ElectronLevel level, const SpinCoupling& sc) {
  const double ms = projection(level);
  return {ms * sc.hv.a_perp(), 0.0, sc.larmor_hz + ms * sc.hv.a_par};
}

struct TransitionFrequencies {
  double omega1 = 0.0;  // electron in |3/2>
  double omega2 = 0.0;  // electron in |1/2>

  double of(ElectronLevel l) const { return l == ElectronLevel::ms_3_2 ? omega1 : omega2; }
};

inline TransitionFrequencies transition_frequencies(const SpinCoupling& sc) {
  const double wl = sc.larmor_hz, ap = sc.hv.a_par, ax = sc.hv.a_perp();
  return {std::hypot(wl + 1.5 * ap, 1.5 * ax), std::hypot(wl + 0.5 * ap, 0.5 * ax)};
}

/// Tilt of the conditional quantization axis away from e_z, in the x-z plane.
inline double tilt_angle(ElectronLevel level, const SpinCoupling& sc) {
  const Vec3 f = conditional_field(level, sc);
  if (f.x() == 0.0 && f.z() == 0.0)
    throw std::invalid_argument("tilt angle undefined for a vanishing conditional field");
  return std::atan2(f.x(), f.z());
}

/// Spin operators of the tilted frame R_y(beta) I R_y(beta)^T together with
/// the conditional transition frequency.
struct TiltedFrame {
  double omega = 0.0;
  double beta = 0.0;
  Mat2 iz;
  Mat2 ix;
  Mat2 iy;

  Vec3 z_axis() const { return {std::sin(beta), 0.0, std::cos(beta)}; }
  Vec3 x_axis() const { return {std::cos(beta), 0.0, -std::sin(beta)}; }
};

inline TiltedFrame tilted_frame(ElectronLevel level, const SpinCoupling& sc) {
  TiltedFrame f;
  const Vec3 field = conditional_field(level, sc);
  f.omega = field.norm();
  f.beta = f.omega == 0.0 ? 0.0 : std::atan2(field.x(), field.z());
  const double c = std::cos(f.beta), s = std::sin(f.beta);
  f.iz = c * spin::Iz() + s * spin::Ix();
  f.ix = c * spin::Ix() - s * spin::Iz();
  f.iy = spin::Iy();
  return f;
}

struct Drive {
  double omega = 0.0;  // rf frequency, Hz
  double phase = 0.0;  // rad
  double rabi = 0.0;   // Omega, Hz
};

/// Rotating-wave bound on the Rabi amplitude relative to the Larmor frequency.
inline bool rotating_wave_ok(double rabi, double larmor_hz) {
  return rabi <= std::abs(larmor_hz) / 20.0;
}

/// Rotating-frame field (Hz) in lab coordinates: detuning along the tilted z
/// axis plus the co-rotating transverse drive Omega cos(beta).
inline Vec3 rotating_frame_field(const TiltedFrame& f, const Drive& d) {
  const double transverse = d.rabi * std::cos(f.beta);
  const Vec3 ex = f.x_axis(), ez = f.z_axis();
  return (f.omega - d.omega) * ez + transverse * std::cos(d.phase) * ex +
         transverse * std::sin(d.phase) * Vec3::UnitY();
}

/// H_R = (w_ms - w) I_{z,beta} + Omega cos(beta) (cos(phi) I_{x,beta} + sin(phi) I_{y,beta}).
inline Mat2 rotating_frame_hamiltonian(ElectronLevel level, const SpinCoupling& sc, const Drive& d) {
  if (d.rabi < 0.0) throw std::invalid_argument("Rabi amplitude must be non-negative");
  const TiltedFrame f = tilted_frame(level, sc);
  const double transverse = d.rabi * std::cos(f.beta);
  return (f.omega - d.omega) * f.iz + transverse * (std::cos(d.phase) * f.ix + std::sin(d.phase) * f.iy);
}

}  // namespace qmn
