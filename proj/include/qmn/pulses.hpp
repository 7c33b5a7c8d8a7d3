#pragma once

// DDrf and CPMG sequence composition.
//
// A DDrf sequence interleaves N ideal electron pi pulses with N+1 phase-
// controlled rf segments (tau, 2 tau, ..., 2 tau, tau). Each rf segment is
// propagated exactly in the rotating frame of the electron level the segment
// belongs to, sandwiched by the frame shifts R_ms(t) = exp(+i 2 pi w t I_{z,beta}).

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qmn/linalg.hpp"
#include "qmn/physics.hpp"

namespace qmn {

struct DdrfParams {
  int n_pi = 100;
  double tau_n = 93e-6;  // s
  double omega = 0.0;    // rf frequency, Hz
  double rabi = 0.0;     // Hz
  double phi_initial = 0.0;
  ElectronLevel initial_electron_level = ElectronLevel::ms_3_2;

  double total_time() const { return 2.0 * n_pi * tau_n; }

  void validate() const {
    if (n_pi < 1) throw std::invalid_argument("DDrf needs at least one electron pi pulse");
    if (!(tau_n > 0.0)) throw std::invalid_argument("tau_n must be positive");
    if (rabi < 0.0) throw std::invalid_argument("Rabi amplitude must be non-negative");
  }
};

/// Rabi amplitude giving a branch-relative conditional rotation angle theta
/// (rad) over the whole sequence: Omega = theta / (2 pi 2 N tau_n).
inline double calibrate_rabi(int n_pi, double tau_n, double theta_relative) {
  return theta_relative / (kTwoPi * 2.0 * n_pi * tau_n);
}

/// How the phase of the final (half-length) rf segment is chosen.
///  - half_step: phi_{N+1} = phi_{N-1} + phi_tau
///  - full_step: phi_{N+1} = phi_{N-1} + 2 phi_tau, i.e. the same increment as
///               every other same-level segment.
enum class FinalPhaseRule { half_step, full_step };

struct PhaseSchedule {
  std::vector<double> phases;  // unreduced, radians; phases[k-1] is phi_k

  std::size_t size() const { return phases.size(); }
  double operator[](std::size_t i) const { return phases[i]; }

  std::vector<double> reduced() const {
    std::vector<double> out;
    out.reserve(phases.size());
    for (double p : phases) {
      double r = std::fmod(p, kTwoPi);
      if (r < 0) r += kTwoPi;
      out.push_back(r);
    }
    return out;
  }
};

/// Phase recursion with phi_tau = 2 pi (omega2 - omega1) tau_n.
inline PhaseSchedule phase_schedule(const DdrfParams& p, double omega1, double omega2,
                                    FinalPhaseRule rule = FinalPhaseRule::half_step) {
  if (p.n_pi < 1) throw std::invalid_argument("phase schedule needs n_pi >= 1");
  const int n = p.n_pi;
  const double phi_tau = kTwoPi * (omega2 - omega1) * p.tau_n;
  std::vector<double> ph(static_cast<std::size_t>(n) + 1, 0.0);
  ph[0] = p.phi_initial;
  ph[1] = ph[0] + phi_tau + std::numbers::pi;
  for (int l = 2; l <= n; ++l) ph[l] = ph[l - 2] + 2.0 * phi_tau;
  if (n >= 2) ph[n] = ph[n - 2] + (rule == FinalPhaseRule::half_step ? 1.0 : 2.0) * phi_tau;
  return {std::move(ph)};
}

/// Schedule for a drive aimed at the transition of `sc` nearest to p.omega:
/// the phase increment tracks the precession of the other electron level.
inline PhaseSchedule targeted_schedule(const DdrfParams& p, const SpinCoupling& sc,
                                       FinalPhaseRule rule = FinalPhaseRule::half_step) {
  const auto tf = transition_frequencies(sc);
  if (std::abs(p.omega - tf.omega1) <= std::abs(p.omega - tf.omega2))
    return phase_schedule(p, tf.omega1, tf.omega2, rule);
  return phase_schedule(p, tf.omega2, tf.omega1, rule);
}

/// Nuclear evolution for the two initial electron states.
struct BranchPair {
  Mat2 from_32 = Mat2::Identity();
  Mat2 from_12 = Mat2::Identity();
};

/// Block-diagonal electron-conditioned nuclear operator. When n_pi is odd the
/// electron ends in the opposite level (electron_flipped).
struct ConditionalUnitary {
  Mat2 u_32 = Mat2::Identity();
  Mat2 u_12 = Mat2::Identity();
  bool electron_flipped = false;

  const Mat2& branch(ElectronLevel start) const { return start == ElectronLevel::ms_3_2 ? u_32 : u_12; }

  /// Tr(u_12^dagger u_32) / 2: electron coherence left after the sequence for
  /// an unpolarised nucleus.
  cplx overlap() const { return (u_12.adjoint() * u_32).trace() / 2.0; }

  double unitarity_error() const { return std::max(qmn::unitarity_error(u_32), qmn::unitarity_error(u_12)); }
};

namespace detail {

/// Precomputed per-level frames for one spin and one drive frequency.
struct LevelFrames {
  TiltedFrame f32;
  TiltedFrame f12;

  LevelFrames(const SpinCoupling& sc)
      : f32(tilted_frame(ElectronLevel::ms_3_2, sc)), f12(tilted_frame(ElectronLevel::ms_1_2, sc)) {}

  const TiltedFrame& of(ElectronLevel l) const { return l == ElectronLevel::ms_3_2 ? f32 : f12; }
};

/// R_ms(t) = exp(+i 2 pi w t I_{z,beta})
inline Mat2 frame_shift(const TiltedFrame& f, double omega, double t) {
  return field_propagator(-omega * f.z_axis(), t);
}

/// R_ms^T(t) = exp(-i 2 pi w t I_{z,beta})
inline Mat2 frame_shift_inverse(const TiltedFrame& f, double omega, double t) {
  return field_propagator(omega * f.z_axis(), t);
}

inline ElectronLevel segment_level(int k, ElectronLevel start) { return (k % 2 == 1) ? start : other(start); }

inline Mat2 segment(int k, const DdrfParams& p, const LevelFrames& frames, double phase, ElectronLevel start) {
  const int n = p.n_pi;
  const TiltedFrame& f = frames.of(segment_level(k, start));
  const double tau = p.tau_n;
  const Drive drive{p.omega, phase, p.rabi};
  if (k == 1) {
    return frame_shift_inverse(f, p.omega, tau) * field_propagator(rotating_frame_field(f, drive), tau);
  }
  if (k == n + 1) {
    const Mat2 u = field_propagator(rotating_frame_field(f, drive), tau);
    return u * frame_shift(f, p.omega, (2.0 * n - 1.0) * tau);
  }
  const Mat2 u = field_propagator(rotating_frame_field(f, drive), 2.0 * tau);
  return frame_shift_inverse(f, p.omega, (2.0 * k - 1.0) * tau) * u * frame_shift(f, p.omega, (2.0 * k - 3.0) * tau);
}

}  // namespace detail

/// The k-th rf segment operator (k = 1 .. N+1) for both initial electron
/// levels, using the supplied phase for that segment.
inline BranchPair segment_unitary(int k, const DdrfParams& p, const SpinCoupling& sc, double phase_k) {
  p.validate();
  if (k < 1 || k > p.n_pi + 1) throw std::out_of_range("DDrf segment index out of range");
  const detail::LevelFrames frames(sc);
  return {detail::segment(k, p, frames, phase_k, ElectronLevel::ms_3_2),
          detail::segment(k, p, frames, phase_k, ElectronLevel::ms_1_2)};
}

enum class Frame { rotating, lab };

/// Chronological product of all segments (k = 1 applied first). With
/// Frame::rotating the result is left in the rotating frame of the last
/// segment; Frame::lab applies the closing R^T(2 N tau) as well.
inline ConditionalUnitary ddrf_unitary(const DdrfParams& p, const SpinCoupling& sc, const PhaseSchedule& schedule,
                                       Frame frame = Frame::rotating) {
  p.validate();
  if (schedule.size() != static_cast<std::size_t>(p.n_pi) + 1)
    throw std::invalid_argument("phase schedule length must be n_pi + 1");
  const detail::LevelFrames frames(sc);
  ConditionalUnitary cu;
  cu.electron_flipped = (p.n_pi % 2 == 1);
  for (ElectronLevel start : {ElectronLevel::ms_3_2, ElectronLevel::ms_1_2}) {
    Mat2 v = Mat2::Identity();
    for (int k = 1; k <= p.n_pi + 1; ++k) v = detail::segment(k, p, frames, schedule[k - 1], start) * v;
    if (frame == Frame::lab) {
      const TiltedFrame& last = frames.of(detail::segment_level(p.n_pi + 1, start));
      v = detail::frame_shift_inverse(last, p.omega, p.total_time()) * v;
    }
    (start == ElectronLevel::ms_3_2 ? cu.u_32 : cu.u_12) = v;
  }
  return cu;
}

/// Convenience: schedule targeted at the nearest transition of this spin.
inline ConditionalUnitary ddrf_unitary(const DdrfParams& p, const SpinCoupling& sc, Frame frame = Frame::rotating,
                                       FinalPhaseRule rule = FinalPhaseRule::half_step) {
  return ddrf_unitary(p, sc, targeted_schedule(p, sc, rule), frame);
}

/// Ideal electron-conditioned rotation the DDrf sequence approximates for a
/// spin without transverse coupling driven at w = w1: the |3/2> branch
/// rotates by +theta/2 and the |1/2> branch by -theta/2 about the phi_initial
/// axis (theta = 2 pi 2 N Omega tau_n), each followed by the free precession
/// accumulated at the detuning of the non-resonant level. Rotating frame.
inline ConditionalUnitary ideal_conditional_rotation(const DdrfParams& p, const SpinCoupling& sc) {
  p.validate();
  const auto tf = transition_frequencies(sc);
  const TiltedFrame f = tilted_frame(ElectronLevel::ms_3_2, sc);
  const double delta = tf.omega2 - tf.omega1;
  const double half_theta = kTwoPi * p.rabi * std::cos(f.beta) * p.n_pi * p.tau_n;
  const int n = p.n_pi;
  // time each branch spends in the non-resonant |1/2> level
  auto idle_time = [&](ElectronLevel start) {
    double t = 0.0;
    for (int k = 1; k <= n + 1; ++k) {
      if (detail::segment_level(k, start) != ElectronLevel::ms_1_2) continue;
      t += (k == 1 || k == n + 1) ? p.tau_n : 2.0 * p.tau_n;
    }
    return t;
  };
  const Vec3 axis_z = f.z_axis();
  const Vec3 axis_phi = std::cos(p.phi_initial) * f.x_axis() + std::sin(p.phi_initial) * Vec3::UnitY();
  auto z = [&](double angle) { return spin::rotation(axis_z, angle); };

  ConditionalUnitary cu;
  cu.electron_flipped = (n % 2 == 1);
  cu.u_32 = z(kTwoPi * delta * idle_time(ElectronLevel::ms_3_2)) * spin::rotation(axis_phi, half_theta);
  cu.u_12 = z(kTwoPi * delta * idle_time(ElectronLevel::ms_1_2)) * spin::rotation(axis_phi, -half_theta);
  return cu;
}

/// |Tr(V_ideal^dagger V)| / 4 for block-diagonal conditional operators.
inline double conditional_fidelity(const ConditionalUnitary& ideal, const ConditionalUnitary& actual) {
  const cplx t = (ideal.u_32.adjoint() * actual.u_32).trace() + (ideal.u_12.adjoint() * actual.u_12).trace();
  return std::abs(t) / 4.0;
}

// -- CPMG ---------------------------------------------------------------------

/// CPMG propagators V_{3/2}, V_{1/2}: tau, 2 tau, ..., 2 tau, tau with the
/// electron level alternating after every pi pulse.
template <typename Matrix>
std::pair<Matrix, Matrix> cpmg_unitary(int n_pi, double tau, const HermitianSpectrum<Matrix>& h32,
                                       const HermitianSpectrum<Matrix>& h12) {
  if (n_pi < 1) throw std::invalid_argument("CPMG needs at least one pi pulse");
  const Matrix a1 = h32.propagator(tau), a2 = h32.propagator(2.0 * tau);
  const Matrix b1 = h12.propagator(tau), b2 = h12.propagator(2.0 * tau);
  auto run = [&](const Matrix& first_short, const Matrix& first_long, const Matrix& second_short,
                 const Matrix& second_long) {
    Matrix v = first_short;
    for (int j = 1; j < n_pi; ++j) v = ((j % 2 == 1) ? second_long : first_long) * v;
    v = ((n_pi % 2 == 1) ? second_short : first_short) * v;
    return v;
  };
  return {run(a1, a2, b1, b2), run(b1, b2, a1, a2)};
}

template <typename Matrix>
std::pair<Matrix, Matrix> cpmg_unitary(int n_pi, double tau, const Matrix& h32, const Matrix& h12) {
  if (h32.rows() != h12.rows() || h32.cols() != h12.cols() || h32.rows() != h32.cols())
    throw std::invalid_argument("CPMG Hamiltonians must be square and of equal dimension");
  return cpmg_unitary<Matrix>(n_pi, tau, HermitianSpectrum<Matrix>(h32), HermitianSpectrum<Matrix>(h12));
}

// -- electron pulses ------------------------------------------------------------

/// Electron pseudo-qubit basis: index 0 = |1/2>, index 1 = |3/2>.
inline constexpr int kElectron12 = 0;
inline constexpr int kElectron32 = 1;

enum class PulseKind { pi_x, pi_y, half_pi };

/// Ideal instantaneous SU(2) rotation on the {|1/2>, |3/2>} pseudo-qubit.
/// half_pi uses the supplied phase (phase = pi/2 is pi_y/2).
inline Mat2 electron_pulse(PulseKind kind, double phase = 0.0) {
  switch (kind) {
    case PulseKind::pi_x:
      return spin::rotation_xy(0.0, std::numbers::pi);
    case PulseKind::pi_y:
      return spin::rotation_xy(0.5 * std::numbers::pi, std::numbers::pi);
    case PulseKind::half_pi:
      return spin::rotation_xy(phase, 0.5 * std::numbers::pi);
  }
  throw std::invalid_argument("unknown pulse kind");
}

// -- serialization ----------------------------------------------------------------

inline nlohmann::json sequence_to_json(const DdrfParams& p, const PhaseSchedule& s) {
  return {{"n_pi", p.n_pi},
          {"tau_n_s", p.tau_n},
          {"omega_hz", p.omega},
          {"rabi_hz", p.rabi},
          {"phi_initial_rad", p.phi_initial},
          {"initial_electron_level", p.initial_electron_level == ElectronLevel::ms_3_2 ? "3/2" : "1/2"},
          {"phases_rad", s.phases}};
}

inline std::pair<DdrfParams, PhaseSchedule> sequence_from_json(const nlohmann::json& j) {
  DdrfParams p;
  p.n_pi = j.at("n_pi").get<int>();
  p.tau_n = j.at("tau_n_s").get<double>();
  p.omega = j.at("omega_hz").get<double>();
  p.rabi = j.at("rabi_hz").get<double>();
  p.phi_initial = j.at("phi_initial_rad").get<double>();
  p.initial_electron_level = j.at("initial_electron_level").get<std::string>() == "1/2" ? ElectronLevel::ms_1_2
                                                                                          : ElectronLevel::ms_3_2;
  return {p, PhaseSchedule{j.at("phases_rad").get<std::vector<double>>()}};
}

}  // namespace qmn
