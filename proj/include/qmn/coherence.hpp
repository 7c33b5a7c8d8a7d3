#pragma once

// Electron coherence under CPMG from the cluster correlation expansion up to
// pairs, and stretched-exponential T2 extraction.
//
// Bath states are product states of I_z eigenstates. For a cluster, the
// coherence factor for every such state is a diagonal element of
// V_{1/2}^dagger V_{3/2} in the product basis, so each cluster is propagated
// once per tau and all bath states are read off the same table.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "qmn/lattice.hpp"
#include "qmn/parallel.hpp"
#include "qmn/physics.hpp"
#include "qmn/pulses.hpp"
#include "qmn/seeding.hpp"

namespace qmn {

/// Nuclear-nuclear point-dipole tensor pref (3 r r - 1) / r^3 in Hz.
inline Mat3 dipolar_tensor(const NuclearSpin& a, const NuclearSpin& b) {
  const Vec3 d = b.position - a.position;
  const double r = d.norm();
  if (!(r > 0.0)) throw std::invalid_argument("coincident nuclear spins");
  const Vec3 n = d / r;
  return dipolar_prefactor(a.gamma_n, b.gamma_n, r) * (3.0 * n * n.transpose() - Mat3::Identity());
}

/// w_L I_z + m_s (A_zx I_x + A_zy I_y + A_zz I_z), without rotating the
/// transverse part onto x, so pairs keep their relative geometry.
inline Mat2 single_spin_hamiltonian(ElectronLevel level, const NuclearSpin& s, const PhysicalConstants& pc = {}) {
  const HyperfineVector hv = hyperfine_vector(s.position, s.gamma_n, pc);
  const double ms = projection(level);
  return pc.larmor(s.gamma_n) * spin::Iz() + ms * (hv.a_xz * spin::Ix() + hv.a_yz * spin::Iy() + hv.a_par * spin::Iz());
}

inline Mat4 pair_hamiltonian(std::size_t l, std::size_t k, const SpinBath& bath, ElectronLevel level,
                             const PhysicalConstants& pc = {}) {
  if (l == k) throw std::invalid_argument("pair Hamiltonian needs two distinct spins");
  if (l >= bath.size() || k >= bath.size()) throw std::out_of_range("spin index outside the bath");
  const MatX one = Mat2::Identity();
  Mat4 h = kron(single_spin_hamiltonian(level, bath.spins[l], pc), one) +
           kron(one, single_spin_hamiltonian(level, bath.spins[k], pc));
  const Mat3 a = dipolar_tensor(bath.spins[l], bath.spins[k]);
  const std::array<Mat2, 3> ops = {spin::Ix(), spin::Iy(), spin::Iz()};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) h += a(i, j) * kron(ops[i], ops[j]);
  return h;
}

struct CoherenceCurve {
  std::vector<double> times;  // total evolution time 2 N tau, s
  std::vector<cplx> l_values;

  std::vector<double> magnitudes() const {
    std::vector<double> m;
    m.reserve(l_values.size());
    for (const cplx& l : l_values) m.push_back(std::abs(l));
    return m;
  }
};

struct CceOptions {
  int order = 2;
  double pair_cutoff_nm = 2.0;
  /// Pairs farther apart are still kept when both hyperfine magnitudes exceed this.
  double strong_coupling_hz = 1e3;
  double denominator_guard = 1e-6;
  int threads = 1;

  void validate() const {
    if (order != 1 && order != 2) throw std::invalid_argument("CCE order must be 1 or 2");
    if (!(pair_cutoff_nm >= 0.0)) throw std::invalid_argument("pair cutoff must be non-negative");
  }
};

enum class StateAveraging { per_cluster, per_state };

/// Bath state: 0 = spin up (I_z = +1/2), 1 = spin down, one entry per spin.
using BathState = std::vector<std::uint8_t>;

inline BathState random_bath_state(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution down(0.5);
  BathState s(n);
  for (auto& b : s) b = down(rng) ? 1 : 0;
  return s;
}

/// Per-cluster diagonal coherence tables for a fixed bath, pulse count and tau grid.
class CceTables {
 public:
  CceTables(const SpinBath& bath, int n_pi, std::vector<double> tau_grid, const CceOptions& opt = {},
            const PhysicalConstants& pc = {})
      : n_pi_(n_pi), tau_(std::move(tau_grid)), opt_(opt) {
    opt_.validate();
    if (n_pi < 1) throw std::invalid_argument("CPMG needs at least one pi pulse");
    if (!std::is_sorted(tau_.begin(), tau_.end())) throw std::invalid_argument("tau grid must be sorted ascending");
    for (double t : tau_)
      if (t < 0.0) throw std::invalid_argument("tau grid must be non-negative");
    const std::size_t n = bath.size();

    singles_ = parallel_map(n, opt_.threads, [&](std::size_t k) {
      const HermitianSpectrum<Mat2> h32(single_spin_hamiltonian(ElectronLevel::ms_3_2, bath.spins[k], pc));
      const HermitianSpectrum<Mat2> h12(single_spin_hamiltonian(ElectronLevel::ms_1_2, bath.spins[k], pc));
      std::vector<std::array<cplx, 2>> rows(tau_.size());
      for (std::size_t t = 0; t < tau_.size(); ++t) {
        const auto [v32, v12] = cpmg_unitary<Mat2>(n_pi_, tau_[t], h32, h12);
        const Mat2 d = v12.adjoint() * v32;
        rows[t] = {d(0, 0), d(1, 1)};
      }
      return rows;
    });

    if (opt_.order < 2) return;
    std::vector<double> strength(n);
    for (std::size_t k = 0; k < n; ++k) {
      const HyperfineVector hv = hyperfine_vector(bath.spins[k].position, bath.spins[k].gamma_n, pc);
      strength[k] = std::hypot(hv.a_par, hv.a_perp());
    }
    for (std::size_t l = 0; l < n; ++l)
      for (std::size_t k = l + 1; k < n; ++k) {
        const double r = (bath.spins[l].position - bath.spins[k].position).norm();
        if (r <= opt_.pair_cutoff_nm || (strength[l] > opt_.strong_coupling_hz && strength[k] > opt_.strong_coupling_hz))
          pairs_.push_back({l, k});
      }
    pair_rows_ = parallel_map(pairs_.size(), opt_.threads, [&](std::size_t p) {
      const auto [l, k] = pairs_[p];
      const HermitianSpectrum<Mat4> h32(pair_hamiltonian(l, k, bath, ElectronLevel::ms_3_2, pc));
      const HermitianSpectrum<Mat4> h12(pair_hamiltonian(l, k, bath, ElectronLevel::ms_1_2, pc));
      std::vector<std::array<cplx, 4>> rows(tau_.size());
      for (std::size_t t = 0; t < tau_.size(); ++t) {
        const auto [v32, v12] = cpmg_unitary<Mat4>(n_pi_, tau_[t], h32, h12);
        const Mat4 d = v12.adjoint() * v32;
        rows[t] = {d(0, 0), d(1, 1), d(2, 2), d(3, 3)};
      }
      return rows;
    });
  }

  std::size_t pair_count() const { return pairs_.size(); }
  const std::vector<double>& tau_grid() const { return tau_; }

  CoherenceCurve evaluate(const BathState& state) const {
    if (state.size() != singles_.size()) throw std::invalid_argument("bath state size does not match the bath");
    CoherenceCurve c;
    c.times.reserve(tau_.size());
    c.l_values.assign(tau_.size(), cplx(1.0, 0.0));
    for (std::size_t t = 0; t < tau_.size(); ++t) {
      c.times.push_back(2.0 * n_pi_ * tau_[t]);
      cplx l = 1.0;
      for (std::size_t k = 0; k < singles_.size(); ++k) l *= singles_[k][t][state[k]];
      for (std::size_t p = 0; p < pairs_.size(); ++p) {
        const auto [a, b] = pairs_[p];
        const cplx la = singles_[a][t][state[a]], lb = singles_[b][t][state[b]];
        if (std::abs(la) < opt_.denominator_guard || std::abs(lb) < opt_.denominator_guard) continue;
        l *= pair_rows_[p][t][2u * state[a] + state[b]] / (la * lb);
      }
      c.l_values[t] = l;
    }
    return c;
  }

  /// Average over n_states random product states. per_cluster averages each
  /// cluster factor over the sampled states before taking the product;
  /// per_state averages whole-bath coherences.
  CoherenceCurve average(std::size_t n_states, std::uint64_t seed,
                         StateAveraging mode = StateAveraging::per_cluster) const {
    if (n_states < 1) throw std::invalid_argument("need at least one bath state");
    std::vector<BathState> states;
    for (std::size_t s = 0; s < n_states; ++s)
      states.push_back(random_bath_state(singles_.size(), derive_seed(seed, {s})));
    if (mode == StateAveraging::per_state) {
      CoherenceCurve acc = evaluate(states[0]);
      for (std::size_t s = 1; s < n_states; ++s) {
        const CoherenceCurve c = evaluate(states[s]);
        for (std::size_t t = 0; t < c.l_values.size(); ++t) acc.l_values[t] += c.l_values[t];
      }
      for (cplx& l : acc.l_values) l /= static_cast<double>(n_states);
      return acc;
    }
    return combine([&](std::size_t k, std::size_t t) {
      cplx m = 0.0;
      for (const auto& st : states) m += singles_[k][t][st[k]];
      return m / static_cast<double>(n_states);
    }, [&](std::size_t p, std::size_t t) {
      const auto [a, b] = pairs_[p];
      cplx m = 0.0;
      for (const auto& st : states) m += pair_rows_[p][t][2u * st[a] + st[b]];
      return m / static_cast<double>(n_states);
    });
  }

  /// Unpolarised bath: every cluster factor is its trace average.
  CoherenceCurve mixed() const {
    return combine([&](std::size_t k, std::size_t t) { return 0.5 * (singles_[k][t][0] + singles_[k][t][1]); },
                   [&](std::size_t p, std::size_t t) {
                     const auto& r = pair_rows_[p][t];
                     return 0.25 * (r[0] + r[1] + r[2] + r[3]);
                   });
  }

 private:
  template <typename Single, typename Pair>
  CoherenceCurve combine(Single single, Pair pair) const {
    CoherenceCurve c;
    for (std::size_t t = 0; t < tau_.size(); ++t) {
      c.times.push_back(2.0 * n_pi_ * tau_[t]);
      std::vector<cplx> ls(singles_.size());
      cplx l = 1.0;
      for (std::size_t k = 0; k < singles_.size(); ++k) l *= (ls[k] = single(k, t));
      for (std::size_t p = 0; p < pairs_.size(); ++p) {
        const auto [a, b] = pairs_[p];
        if (std::abs(ls[a]) < opt_.denominator_guard || std::abs(ls[b]) < opt_.denominator_guard) continue;
        l *= pair(p, t) / (ls[a] * ls[b]);
      }
      c.l_values.push_back(l);
    }
    return c;
  }

  int n_pi_;
  std::vector<double> tau_;
  CceOptions opt_;
  std::vector<std::vector<std::array<cplx, 2>>> singles_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  std::vector<std::vector<std::array<cplx, 4>>> pair_rows_;
};

inline CoherenceCurve cce_coherence(const SpinBath& bath, int n_pi, const std::vector<double>& tau_grid,
                                    const BathState& state, const CceOptions& opt = {},
                                    const PhysicalConstants& pc = {}) {
  return CceTables(bath, n_pi, tau_grid, opt, pc).evaluate(state);
}

// -- T2 fit ---------------------------------------------------------------------

struct T2Fit {
  double t2 = 0.0;  // s
  double stretch_exponent = 0.0;
  double residual = 0.0;  // rms of |L| - model
};

class NoDecayError : public std::runtime_error {
 public:
  explicit NoDecayError(CoherenceCurve c)
      : std::runtime_error("coherence does not decay below 0.9 within the sampled window"), curve(std::move(c)) {}
  CoherenceCurve curve;
};

inline constexpr std::size_t kMinFitPoints = 8;

namespace detail {

struct StretchedExpResidual {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  const std::vector<double>* t;
  const std::vector<double>* y;

  int inputs() const { return 2; }
  int values() const { return static_cast<int>(t->size()); }

  // x = (log T2, log n)
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    const double t2 = std::exp(x(0)), n = std::exp(x(1));
    for (std::size_t i = 0; i < t->size(); ++i) f(static_cast<Eigen::Index>(i)) = std::exp(-std::pow((*t)[i] / t2, n)) - (*y)[i];
    return 0;
  }
};

}  // namespace detail

/// Least-squares fit of |L(t)| to exp(-(t/T2)^n), seeded by a log-log regression.
inline T2Fit fit_t2(const CoherenceCurve& curve) {
  if (curve.times.size() != curve.l_values.size()) throw std::invalid_argument("malformed coherence curve");
  if (curve.times.size() < kMinFitPoints) throw std::invalid_argument("T2 fit needs at least 8 points");
  const std::vector<double> y = curve.magnitudes();
  if (std::all_of(y.begin(), y.end(), [](double v) { return v > 0.9; })) throw NoDecayError(curve);

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(curve.times[i] > 0.0) || y[i] <= 0.02 || y[i] >= 0.98) continue;
    const double lx = std::log(curve.times[i]), ly = std::log(-std::log(y[i]));
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, ++m;
  }
  double n0 = 2.0, t20 = 0.0;
  if (m >= 2 && sxx * m - sx * sx > 0.0) {
    n0 = std::clamp((m * sxy - sx * sy) / (m * sxx - sx * sx), 0.2, 8.0);
    t20 = std::exp(-(sy - n0 * sx) / (m * n0));
  }
  if (!(t20 > 0.0) || !std::isfinite(t20)) {
    // first crossing of 1/e
    t20 = curve.times.back();
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] < std::exp(-1.0)) {
        t20 = curve.times[i];
        break;
      }
  }

  detail::StretchedExpResidual functor{&curve.times, &y};
  Eigen::NumericalDiff<detail::StretchedExpResidual> diff(functor);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::StretchedExpResidual>> lm(diff);
  lm.parameters.xtol = 1e-12;
  lm.parameters.ftol = 1e-12;
  lm.parameters.maxfev = 2000;
  Eigen::VectorXd x(2);
  x << std::log(t20), std::log(n0);
  lm.minimize(x);

  Eigen::VectorXd f(static_cast<Eigen::Index>(y.size()));
  functor(x, f);
  return {std::exp(x(0)), std::exp(x(1)), std::sqrt(f.squaredNorm() / static_cast<double>(y.size()))};
}

// -- concentration sweep ------------------------------------------------------------

/// Spins of a sampled bath within `radius_nm` of the defect.
inline SpinBath spherical_bath(const std::vector<Site>& sites, const IsotopeConfig& cfg, double radius_nm) {
  SpinBath cube = sample_bath(sites, cfg);
  SpinBath out;
  out.seed = cube.seed;
  out.volume = 4.0 / 3.0 * std::numbers::pi * radius_nm * radius_nm * radius_nm;
  for (const auto& s : cube.spins)
    if (s.position.norm() <= radius_nm) out.spins.push_back(s);
  return out;
}

struct CoherenceSettings {
  LatticeSpec lattice;
  double bath_radius_nm = 4.0;
  int n_pi = 100;
  std::vector<double> tau_grid;  // s
  std::size_t n_distributions = 5;
  std::size_t n_bathstates = 5;
  std::uint64_t master_seed = 1;
  StateAveraging averaging = StateAveraging::per_cluster;
  CceOptions cce;
  PhysicalConstants constants;
};

struct ConcentrationPoint {
  double concentration = 0.0;
  double median_t2 = std::numeric_limits<double>::quiet_NaN();  // s, NaN if nothing decayed
  std::vector<double> t2;                                        // per distribution, NaN for no decay
  std::vector<double> stretch;
  std::size_t no_decay = 0;
};

inline double median_of(std::vector<double> v) {
  std::erase_if(v, [](double x) { return !std::isfinite(x); });
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// State-averaged curve of every bath distribution at one concentration.
/// Distribution d uses the same placement draws at every concentration.
inline std::vector<CoherenceCurve> distribution_curves(double concentration, const std::vector<Site>& sites,
                                                       const CoherenceSettings& s) {
  if (s.n_distributions < 1 || s.n_bathstates < 1) throw std::invalid_argument("counts must be >= 1");
  const auto [c13, si29] = concentration_split(concentration);
  std::vector<CoherenceCurve> out;
  for (std::size_t d = 0; d < s.n_distributions; ++d) {
    const std::uint64_t seed = derive_seed(s.master_seed, {0x636F68ULL, d});
    const SpinBath bath = spherical_bath(sites, {c13, si29, seed}, s.bath_radius_nm);
    const CceTables tables(bath, s.n_pi, s.tau_grid, s.cce, s.constants);
    out.push_back(tables.average(s.n_bathstates, derive_seed(seed, {0x7374ULL}), s.averaging));
  }
  return out;
}

inline std::vector<Site> coherence_sites(const CoherenceSettings& s) {
  const double side = 2.0 * s.bath_radius_nm;
  return generate_supercell(s.lattice, side * side * side);
}

inline ConcentrationPoint summarize_distributions(double concentration, const std::vector<CoherenceCurve>& curves) {
  ConcentrationPoint pt;
  pt.concentration = concentration;
  for (const auto& curve : curves) {
    try {
      const T2Fit f = fit_t2(curve);
      pt.t2.push_back(f.t2);
      pt.stretch.push_back(f.stretch_exponent);
    } catch (const NoDecayError&) {
      pt.t2.push_back(std::numeric_limits<double>::quiet_NaN());
      pt.stretch.push_back(std::numeric_limits<double>::quiet_NaN());
      ++pt.no_decay;
    }
  }
  pt.median_t2 = median_of(pt.t2);
  return pt;
}

inline std::vector<ConcentrationPoint> coherence_vs_concentration(const std::vector<double>& concentrations,
                                                                  const CoherenceSettings& s) {
  if (s.tau_grid.size() < kMinFitPoints) throw std::invalid_argument("tau grid needs at least 8 points");
  const auto sites = coherence_sites(s);
  std::vector<ConcentrationPoint> out;
  for (double c : concentrations) out.push_back(summarize_distributions(c, distribution_curves(c, sites, s)));
  return out;
}

/// tau values giving n_points total times 2 N tau evenly spaced on (0, t_max].
inline std::vector<double> uniform_tau_grid(int n_pi, double t_max, std::size_t n_points) {
  if (n_pi < 1 || !(t_max > 0.0) || n_points < 1) throw std::invalid_argument("invalid tau grid request");
  std::vector<double> g;
  for (std::size_t i = 1; i <= n_points; ++i) g.push_back(t_max * static_cast<double>(i) / n_points / (2.0 * n_pi));
  return g;
}

}  // namespace qmn
