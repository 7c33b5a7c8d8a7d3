#pragma once

// Electron-mediated CNOT between two nuclear spins built from DDrf
// conditional rotations, and gauge-maximised gate fidelity.
//
// Each nucleus is described in a frame rotating at w_ref = (w1 + w2) / 2
// about z. An even-N DDrf keeps every spin for equal times in both electron
// levels, so in that frame idle spins see (almost) no evolution and rf phases
// can be referenced to a global clock.
//
// Entangler: with the electron in an X eigenstate,
//   CR_c(+pi) . E . CR_t(pi) . E^dagger . CR_c(-pi) = exp(-i pi/4 X_e X_c X_t)
// where CR_k(theta) = exp(-i theta/4 Z_e sigma_x^k) and E rotates Z_e onto Y_e.
// Local DDrf rotations with the electron parked in |1/2> turn this into CNOT.

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmn/linalg.hpp"
#include "qmn/parallel.hpp"
#include "qmn/physics.hpp"
#include "qmn/pulses.hpp"

namespace qmn {

struct GateParams {
  int n_pi = 32;
  double tau_target = 100e-6;  // s
  /// Snap tau to the nearest multiple of 1/(2 |w2 - w1|) of the driven spin.
  bool snap_tau = true;
  FinalPhaseRule phase_rule = FinalPhaseRule::half_step;
  /// Largest admissible Rabi amplitude as a fraction of |w2 - w1|.
  double max_rabi_fraction = 0.1;

  void validate() const {
    if (n_pi < 2 || n_pi % 2 != 0) throw std::invalid_argument("gate DDrf needs an even n_pi >= 2");
    if (!(tau_target > 0.0)) throw std::invalid_argument("tau_target must be positive");
  }
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double reference_frequency(const SpinCoupling& sc) {
  const auto tf = transition_frequencies(sc);
  return 0.5 * (tf.omega1 + tf.omega2);
}

/// DDrf settings for a branch-relative rotation theta (sign picks the
/// direction) about the phi axis of spin `sc`, driven at its w1.
inline DdrfParams calibrate_conditional(const SpinCoupling& sc, double theta, double phi, const GateParams& g) {
  g.validate();
  const auto tf = transition_frequencies(sc);
  const double split = std::abs(tf.omega2 - tf.omega1);
  if (!(split > 0.0)) throw CalibrationError("spin has no conditional splitting; it cannot be addressed");
  DdrfParams p;
  p.n_pi = g.n_pi;
  p.tau_n = g.tau_target;
  if (g.snap_tau) {
    const double unit = 1.0 / (2.0 * split);
    p.tau_n = std::max(1.0, std::round(g.tau_target / unit)) * unit;
  }
  p.omega = tf.omega1;
  p.phi_initial = phi + (theta < 0.0 ? std::numbers::pi : 0.0);
  const double cb = std::cos(tilt_angle(ElectronLevel::ms_3_2, sc));
  p.rabi = std::abs(theta) / (kTwoPi * 2.0 * p.n_pi * p.tau_n * cb);
  if (p.rabi > g.max_rabi_fraction * split)
    throw CalibrationError("required Rabi amplitude " + std::to_string(p.rabi) + " Hz exceeds " +
                           std::to_string(g.max_rabi_fraction) + " x splitting; use larger n_pi or tau_n");
  return p;
}

/// Branch unitaries of spin `sc` under a sequence aimed at another (or the
/// same) spin, expressed in the w_ref frame of `sc`.
inline ConditionalUnitary framed_response(const DdrfParams& p, const PhaseSchedule& s, const SpinCoupling& sc) {
  ConditionalUnitary cu = ddrf_unitary(p, sc, s, Frame::lab);
  const Mat2 f = spin::rotation_z(-kTwoPi * reference_frequency(sc) * p.total_time());
  cu.u_32 = f * cu.u_32;
  cu.u_12 = f * cu.u_12;
  return cu;
}

/// Conditional rotation with branch-relative angle +-pi/2 on one spin.
inline ConditionalUnitary conditional_pi2(const SpinCoupling& sc, int direction, const GateParams& g,
                                          double phi = 0.0) {
  if (direction != 1 && direction != -1) throw std::invalid_argument("direction must be +1 or -1");
  const DdrfParams p = calibrate_conditional(sc, direction * 0.5 * std::numbers::pi, phi, g);
  return framed_response(p, targeted_schedule(p, sc, g.phase_rule), sc);
}

/// Branch-relative rotation angle 2 acos|Tr(u_12^dagger u_32)/2|.
inline double relative_rotation_angle(const ConditionalUnitary& cu) {
  return 2.0 * std::acos(std::clamp(std::abs(cu.overlap()), 0.0, 1.0));
}

/// exp(-i theta/4 Z_e sigma_phi) in the w_ref frame.
inline ConditionalUnitary ideal_conditional(double theta, double phi) {
  ConditionalUnitary cu;
  const double a = 0.5 * std::abs(theta);
  const double ph = phi + (theta < 0.0 ? std::numbers::pi : 0.0);
  cu.u_32 = spin::rotation_xy(ph, a);
  cu.u_12 = spin::rotation_xy(ph, -a);
  return cu;
}

// -- circuit assembly ----------------------------------------------------------------

/// Register layout: electron (most significant) then nuclear spins in order.
/// Electron index 0 = |1/2>, 1 = |3/2>.
class Register {
 public:
  explicit Register(std::size_t n_nuclei) : n_(n_nuclei), dim_(std::size_t{2} << n_nuclei) {
    if (n_nuclei < 1 || n_nuclei > 10) throw std::invalid_argument("register supports 1..10 nuclear spins");
    u_ = MatX::Identity(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
  }

  std::size_t nuclei() const { return n_; }
  const MatX& unitary() const { return u_; }

  void apply_electron(const Mat2& g) { u_ = kron(g, MatX::Identity(nuc_dim(), nuc_dim())) * u_; }

  /// Electron-conditioned product of per-spin branch unitaries (one per nucleus).
  void apply_conditional(const std::vector<ConditionalUnitary>& per_spin) {
    if (per_spin.size() != n_) throw std::invalid_argument("one conditional unitary per nucleus required");
    MatX blk32 = MatX::Identity(1, 1), blk12 = MatX::Identity(1, 1);
    for (const auto& cu : per_spin) {
      blk32 = kron(blk32, cu.u_32);
      blk12 = kron(blk12, cu.u_12);
    }
    MatX op = MatX::Zero(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
    const Eigen::Index h = nuc_dim();
    op.block(0, 0, h, h) = blk12;
    op.block(h, h, h, h) = blk32;
    u_ = op * u_;
  }

  /// Nuclear block <e0| U |e0> for the electron starting and ending in |1/2>.
  MatX electron_block() const { return u_.block(0, 0, nuc_dim(), nuc_dim()); }

 private:
  Eigen::Index nuc_dim() const { return static_cast<Eigen::Index>(dim_ / 2); }
  std::size_t n_;
  std::size_t dim_;
  MatX u_;
};

inline Mat2 electron_x_rotation(double angle) { return spin::rotation_xy(0.0, angle); }

/// One DDrf step of the circuit: which spin is driven, the branch-relative
/// angle and the axis.
struct CircuitStep {
  std::size_t driven;
  double theta;
  double phi;
};

enum class PrimitiveModel { ddrf, ideal };

struct CnotResult {
  MatX electron_block;       // 2^M x 2^M nuclear block with electron in/out |1/2>
  double disentanglement_residual = 0.0;  // max |B^dagger B - 1|
  bool residual_warning = false;
};

inline constexpr double kDisentanglementTolerance = 1e-3;

namespace detail {

inline void apply_step(Register& reg, const std::vector<SpinCoupling>& spins, const CircuitStep& st,
                       const GateParams& g, PrimitiveModel model) {
  std::vector<ConditionalUnitary> per(spins.size());
  if (model == PrimitiveModel::ideal) {
    per[st.driven] = ideal_conditional(st.theta, st.phi);
  } else {
    const DdrfParams p = calibrate_conditional(spins[st.driven], st.theta, st.phi, g);
    const PhaseSchedule s = targeted_schedule(p, spins[st.driven], g.phase_rule);
    for (std::size_t k = 0; k < spins.size(); ++k) per[k] = framed_response(p, s, spins[k]);
  }
  reg.apply_conditional(per);
}

}  // namespace detail

/// CNOT(control -> target) on a register made of `spins` (control and target
/// are indices into it; the rest act as spectators driven by every sequence).
inline CnotResult nn_cnot(const std::vector<SpinCoupling>& spins, std::size_t control, std::size_t target,
                          const GateParams& g = {}, PrimitiveModel model = PrimitiveModel::ddrf) {
  if (control == target) throw std::invalid_argument("control and target must differ");
  if (control >= spins.size() || target >= spins.size()) throw std::out_of_range("spin index outside the register");
  constexpr double pi = std::numbers::pi;
  Register reg(spins.size());
  auto step = [&](std::size_t k, double theta, double phi) { detail::apply_step(reg, spins, {k, theta, phi}, g, model); };

  // Electron parked in |1/2>: the |1/2> branch gives R_phi(-theta/2) locally.
  step(control, pi, 0.5 * pi);  // R_y(-pi/2) on control
  reg.apply_electron(electron_pulse(PulseKind::half_pi, 0.5 * pi));
  step(control, pi, 0.0);
  reg.apply_electron(electron_x_rotation(0.5 * pi));
  step(target, pi, 0.0);
  reg.apply_electron(electron_x_rotation(-0.5 * pi));
  step(control, -pi, 0.0);
  reg.apply_electron(electron_pulse(PulseKind::half_pi, 0.5 * pi).adjoint());
  step(control, pi, -0.5 * pi);  // R_y(+pi/2) on control
  step(target, pi, pi);          // R_x(+pi/2) on target

  CnotResult r;
  r.electron_block = reg.electron_block();
  const MatX gram = r.electron_block.adjoint() * r.electron_block;
  r.disentanglement_residual = (gram - MatX::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  r.residual_warning = r.disentanglement_residual > kDisentanglementTolerance;
  return r;
}

// -- fidelity ----------------------------------------------------------------------------

/// CNOT with qubit 0 (most significant) as control; |0> = I_z = +1/2.
inline Mat4 ideal_cnot() {
  Mat4 m = Mat4::Zero();
  m(0, 0) = m(1, 1) = 1.0;
  m(2, 3) = m(3, 2) = 1.0;
  return m;
}

inline Mat4 swap_gate() {
  Mat4 m = Mat4::Zero();
  m(0, 0) = m(3, 3) = 1.0;
  m(1, 2) = m(2, 1) = 1.0;
  return m;
}

/// Local z rotations diag phases for qubit angles (a on qubit 0, b on qubit 1).
inline std::array<double, 4> z_phases(double a, double b) {
  return {-0.5 * (a + b), -0.5 * (a - b), 0.5 * (a - b), 0.5 * (a + b)};
}

/// |Tr(U_ideal^dagger Z(a,b) U Z(c,d))| / 4 maximised over the four local
/// z angles by a coarse grid followed by shrinking coordinate search.
inline double gate_fidelity(const MatX& actual, const Mat4& ideal) {
  if (actual.rows() != 4 || actual.cols() != 4) throw std::invalid_argument("gate fidelity needs a 4x4 operator");
  Mat4 m;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = std::conj(ideal(i, j)) * actual(i, j);
  auto eval = [&](const std::array<double, 4>& x) {
    const auto l = z_phases(x[0], x[1]), r = z_phases(x[2], x[3]);
    cplx t = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) t += m(i, j) * std::exp(kI * (l[i] + r[j]));
    return std::abs(t) / 4.0;
  };
  constexpr int kCoarse = 12;
  std::array<double, 4> best{};
  double fbest = -1.0;
  for (int a = 0; a < kCoarse; ++a)
    for (int b = 0; b < kCoarse; ++b)
      for (int c = 0; c < kCoarse; ++c)
        for (int d = 0; d < kCoarse; ++d) {
          const std::array<double, 4> x = {kTwoPi * a / kCoarse, kTwoPi * b / kCoarse, kTwoPi * c / kCoarse,
                                           kTwoPi * d / kCoarse};
          const double f = eval(x);
          if (f > fbest) fbest = f, best = x;
        }
  for (double step = kTwoPi / kCoarse; step > 1e-10; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int k = 0; k < 4; ++k)
        for (double s : {step, -step}) {
          auto x = best;
          x[k] += s;
          const double f = eval(x);
          if (f > fbest + 1e-15) fbest = f, best = x, improved = true;
        }
    }
  }
  return fbest;
}

/// Extract the (control, target) 4x4 block with every spectator held in the
/// z basis state `spectator_state` (bit k of the mask for the k-th spectator).
inline MatX two_qubit_block(const MatX& nuclear, std::size_t n, std::size_t control, std::size_t target,
                            std::size_t spectator_state) {
  MatX out(4, 4);
  auto index = [&](int qc, int qt) {
    std::size_t idx = 0, spec_bit = 0;
    for (std::size_t k = 0; k < n; ++k) {
      int bit;
      if (k == control) bit = qc;
      else if (k == target) bit = qt;
      else bit = static_cast<int>((spectator_state >> spec_bit++) & 1u);
      idx = (idx << 1) | static_cast<std::size_t>(bit);
    }
    return static_cast<Eigen::Index>(idx);
  };
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out(i, j) = nuclear(index(i >> 1, i & 1), index(j >> 1, j & 1));
  return out;
}

/// Worst case over spectator z-basis states.
inline double worst_spectator_fidelity(const CnotResult& r, std::size_t n, std::size_t control, std::size_t target) {
  double worst = 1.0;
  const std::size_t n_states = std::size_t{1} << (n - 2);
  for (std::size_t s = 0; s < n_states; ++s)
    worst = std::min(worst, gate_fidelity(two_qubit_block(r.electron_block, n, control, target, s), ideal_cnot()));
  return worst;
}

// -- fidelity matrix -------------------------------------------------------------------------

struct FidelityEntry {
  std::size_t control = 0;
  std::size_t target = 0;
  double fidelity_frozen = 0.0;
  double fidelity_active = 0.0;
  double residual = 0.0;
  bool residual_warning = false;
};

/// All ordered pairs. Frozen: only control and target evolve. Active: every
/// spin in `spins` is driven by each sequence, worst spectator state reported.
inline std::vector<FidelityEntry> fidelity_matrix(const std::vector<SpinCoupling>& spins, const GateParams& g = {},
                                                  int threads = 1) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t c = 0; c < spins.size(); ++c)
    for (std::size_t t = 0; t < spins.size(); ++t)
      if (c != t) pairs.push_back({c, t});
  return parallel_map(pairs.size(), threads, [&](std::size_t i) {
    const auto [c, t] = pairs[i];
    FidelityEntry e{c, t};
    const CnotResult frozen = nn_cnot({spins[c], spins[t]}, 0, 1, g);
    e.fidelity_frozen = gate_fidelity(frozen.electron_block, ideal_cnot());
    e.residual = frozen.disentanglement_residual;
    e.residual_warning = frozen.residual_warning;
    e.fidelity_active = spins.size() > 2 ? worst_spectator_fidelity(nn_cnot(spins, c, t, g), spins.size(), c, t)
                                         : e.fidelity_frozen;
    return e;
  });
}

/// Four 13C spins with the hyperfine couplings of the reference register (Hz).
inline std::vector<SpinCoupling> reference_bath(const PhysicalConstants& pc = {}) {
  constexpr std::array<double, 4> a_zz = {12.5e3, -3.8e3, -18.9e3, 13.4e3};
  constexpr std::array<double, 4> a_xz = {2.3e3, 5.1e3, -13e3, 9e3};
  std::vector<SpinCoupling> out;
  for (std::size_t i = 0; i < 4; ++i) out.push_back({{a_zz[i], a_xz[i], 0.0}, pc.larmor(Species::C13)});
  return out;
}

inline nlohmann::json couplings_to_json(const std::vector<SpinCoupling>& spins) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : spins)
    arr.push_back({{"a_zz_hz", s.hv.a_par}, {"a_xz_hz", s.hv.a_xz}, {"a_yz_hz", s.hv.a_yz}, {"larmor_hz", s.larmor_hz}});
  return arr;
}

inline std::vector<SpinCoupling> couplings_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw std::invalid_argument("coupling list must be a JSON array");
  std::vector<SpinCoupling> out;
  for (const auto& e : arr)
    out.push_back({{e.at("a_zz_hz").get<double>(), e.at("a_xz_hz").get<double>(), e.value("a_yz_hz", 0.0)},
                   e.at("larmor_hz").get<double>()});
  return out;
}

}  // namespace qmn
