#pragma once

// Electron readout of DDrf-driven nuclear spins: phase-swept readout signals,
// contrast, frequency spectra, polar contrast maps and the register census.
//
// Nuclear spins start maximally mixed and do not interact with each other, so
// the electron coherence after the sequence is the product of the per-spin
// branch overlaps Tr(u_12^dagger u_32) / 2.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "qmn/lattice.hpp"
#include "qmn/parallel.hpp"
#include "qmn/physics.hpp"
#include "qmn/pulses.hpp"
#include "qmn/seeding.hpp"

namespace qmn {

struct ReadoutSignal {
  std::vector<double> phases;  // rad
  std::vector<double> p_32;

  /// Amplitude of the first harmonic of p_32 over the (uniform) phase grid.
  double oscillation_amplitude() const {
    if (phases.size() != p_32.size() || phases.empty()) throw std::invalid_argument("malformed readout signal");
    cplx acc = 0.0;
    for (std::size_t i = 0; i < phases.size(); ++i) acc += p_32[i] * std::exp(-kI * phases[i]);
    return 2.0 * std::abs(acc) / static_cast<double>(phases.size());
  }

  double contrast() const { return std::clamp(1.0 - 2.0 * oscillation_amplitude(), 0.0, 1.0); }
};

/// Lab-frame electron coherence factor for one spin.
inline cplx branch_overlap(const DdrfParams& p, const SpinCoupling& sc, const PhaseSchedule& s) {
  return ddrf_unitary(p, sc, s, Frame::lab).overlap();
}

inline cplx branch_overlap(const DdrfParams& p, const SpinCoupling& sc,
                           FinalPhaseRule rule = FinalPhaseRule::half_step) {
  return branch_overlap(p, sc, targeted_schedule(p, sc, rule));
}

inline constexpr int kMinReadoutPhases = 24;

/// pi_y/2 from |1/2>, conditional evolution with coherence factor `coherence`,
/// pi_phi/2, then P(|3/2>). An odd number of electron pi pulses swaps the
/// electron levels, which conjugates the coherence seen by the readout.
inline ReadoutSignal readout_from_coherence(cplx coherence, bool electron_flipped, int n_phases = kMinReadoutPhases) {
  if (n_phases < kMinReadoutPhases) throw std::invalid_argument("readout needs at least 24 phase points");
  const cplx l = electron_flipped ? std::conj(coherence) : coherence;
  Mat2 rho;  // basis {|1/2>, |3/2>}
  rho << 0.5, 0.5 * std::conj(l), 0.5 * l, 0.5;
  ReadoutSignal sig;
  sig.phases.reserve(static_cast<std::size_t>(n_phases));
  sig.p_32.reserve(static_cast<std::size_t>(n_phases));
  for (int i = 0; i < n_phases; ++i) {
    const double phi = kTwoPi * i / n_phases;
    const Mat2 r = electron_pulse(PulseKind::half_pi, phi);
    const Mat2 out = r * rho * r.adjoint();
    sig.phases.push_back(phi);
    sig.p_32.push_back(std::clamp(out(kElectron32, kElectron32).real(), 0.0, 1.0));
  }
  return sig;
}

inline ReadoutSignal readout_signal(const DdrfParams& p, const SpinCoupling& sc, const PhaseSchedule& s,
                                    int n_phases = kMinReadoutPhases) {
  return readout_from_coherence(branch_overlap(p, sc, s), p.n_pi % 2 == 1, n_phases);
}

/// Whole bath under one physical sequence (shared phase schedule).
inline ReadoutSignal readout_signal(const DdrfParams& p, const std::vector<SpinCoupling>& bath,
                                    const PhaseSchedule& s, int n_phases = kMinReadoutPhases) {
  cplx l = 1.0;
  for (const auto& sc : bath) l *= branch_overlap(p, sc, s);
  return readout_from_coherence(l, p.n_pi % 2 == 1, n_phases);
}

inline double contrast_from_overlap(cplx overlap) { return std::clamp(1.0 - std::abs(overlap), 0.0, 1.0); }

/// Single-spin contrast with the schedule targeted at the transition nearest
/// p.omega. Both the trace-overlap and the readout-sweep routes are evaluated.
struct ContrastPair {
  double from_overlap = 0.0;
  double from_readout = 0.0;
};

inline ContrastPair contrast_both(const DdrfParams& p, const SpinCoupling& sc,
                                  FinalPhaseRule rule = FinalPhaseRule::half_step) {
  const cplx l = branch_overlap(p, sc, rule);
  return {contrast_from_overlap(l), readout_from_coherence(l, p.n_pi % 2 == 1).contrast()};
}

inline double contrast(const DdrfParams& p, const SpinCoupling& sc, FinalPhaseRule rule = FinalPhaseRule::half_step) {
  return contrast_from_overlap(branch_overlap(p, sc, rule));
}

// -- detection settings -------------------------------------------------------

/// Sequence settings shared by maps and the census. The drive is always put on
/// resonance with the spin under test (omega = its w1) and a single rf
/// amplitude is used for every spin, calibrated so an on-axis spin acquires a
/// branch-relative rotation `theta`.
struct DetectionParams {
  int n_pi = 100;
  double tau_n = 93e-6;
  double theta = std::numbers::pi;
  double phi_initial = 0.0;
  FinalPhaseRule phase_rule = FinalPhaseRule::half_step;
  double contrast_threshold = 0.5;
  /// Delta f = resolution_scale / (2 N tau_n)
  double resolution_scale = 1.0;
  /// Spins below this contrast and outside the sensing radius are dropped
  /// from the independent-driving check.
  double prune_contrast = 0.01;

  double rabi() const { return calibrate_rabi(n_pi, tau_n, theta); }
  double resolution_hz() const { return resolution_scale / (2.0 * n_pi * tau_n); }

  DdrfParams resonant(const SpinCoupling& sc) const {
    DdrfParams p;
    p.n_pi = n_pi;
    p.tau_n = tau_n;
    p.omega = transition_frequencies(sc).omega1;
    p.rabi = rabi();
    p.phi_initial = phi_initial;
    return p;
  }

  void validate() const {
    if (n_pi < 1) throw std::invalid_argument("n_pi must be >= 1");
    if (!(tau_n > 0.0)) throw std::invalid_argument("tau_n must be positive");
    if (!(theta >= 0.0)) throw std::invalid_argument("theta must be non-negative");
    if (!(resolution_scale >= 0.0)) throw std::invalid_argument("resolution_scale must be non-negative");
  }
};

inline double resonant_contrast(const DetectionParams& d, const SpinCoupling& sc) {
  return contrast(d.resonant(sc), sc, d.phase_rule);
}

// -- spectrum ------------------------------------------------------------------

struct SpectrumPoint {
  double omega_hz = 0.0;
  double contrast = 0.0;
};

/// Bath contrast versus drive frequency. At each frequency every spin is
/// driven with the schedule targeted at its own nearest transition, so each
/// spin shows a dip at both w1 and w2. Spins with both transitions farther
/// than `window_hz` from the drive use their undriven overlap instead.
inline std::vector<SpectrumPoint> spectrum(const std::vector<SpinCoupling>& bath, const std::vector<double>& omega_grid,
                                           const DetectionParams& d, int threads = 1,
                                           double window_hz = std::numeric_limits<double>::infinity()) {
  d.validate();
  if (omega_grid.empty()) throw std::invalid_argument("spectrum needs a non-empty frequency grid");
  if (!(window_hz > 0.0)) throw std::invalid_argument("spectrum window must be positive");
  auto drive = [&](double omega, double rabi) {
    DdrfParams p;
    p.n_pi = d.n_pi;
    p.tau_n = d.tau_n;
    p.omega = omega;
    p.rabi = rabi;
    p.phi_initial = d.phi_initial;
    return p;
  };
  const bool windowed = std::isfinite(window_hz);
  std::vector<cplx> idle;
  std::vector<TransitionFrequencies> tf;
  if (windowed) {
    for (const auto& sc : bath) {
      tf.push_back(transition_frequencies(sc));
      idle.push_back(branch_overlap(drive(tf.back().omega1, 0.0), sc, d.phase_rule));
    }
  }
  return parallel_map(omega_grid.size(), threads, [&](std::size_t i) {
    const double w = omega_grid[i];
    const DdrfParams p = drive(w, d.rabi());
    cplx l = 1.0;
    for (std::size_t k = 0; k < bath.size(); ++k) {
      if (windowed && std::abs(w - tf[k].omega1) > window_hz && std::abs(w - tf[k].omega2) > window_hz)
        l *= idle[k];
      else
        l *= branch_overlap(p, bath[k], d.phase_rule);
    }
    return SpectrumPoint{w, contrast_from_overlap(l)};
  });
}

/// Uniform grid covering every transition of the bath plus a margin.
inline std::vector<double> spectrum_grid(const std::vector<SpinCoupling>& bath, double margin_hz, double step_hz) {
  if (bath.empty()) throw std::invalid_argument("cannot derive a spectrum grid from an empty bath");
  if (!(step_hz > 0.0)) throw std::invalid_argument("grid step must be positive");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& sc : bath) {
    const auto tf = transition_frequencies(sc);
    lo = std::min({lo, tf.omega1, tf.omega2});
    hi = std::max({hi, tf.omega1, tf.omega2});
  }
  lo = std::max(0.0, lo - margin_hz);
  hi += margin_hz;
  std::vector<double> grid;
  for (double w = lo; w <= hi + 0.5 * step_hz; w += step_hz) grid.push_back(w);
  return grid;
}

// -- contrast map ----------------------------------------------------------------

struct ContrastMapPoint {
  double r = 0.0;      // nm
  double theta = 0.0;  // rad, polar angle from the c axis
  double contrast = 0.0;
};

inline constexpr double kMinMapRadiusNm = 0.1;

inline std::vector<ContrastMapPoint> contrast_map(Species species, const DetectionParams& d,
                                                  const std::vector<double>& r_grid,
                                                  const std::vector<double>& theta_grid,
                                                  const PhysicalConstants& pc = {}, int threads = 1) {
  d.validate();
  for (double r : r_grid)
    if (!(r > kMinMapRadiusNm)) throw std::invalid_argument("contrast map radii must exceed 0.1 nm");
  const std::size_t nt = theta_grid.size();
  return parallel_map(r_grid.size() * nt, threads, [&](std::size_t i) {
    const double r = r_grid[i / nt], th = theta_grid[i % nt];
    const NuclearSpin s = make_spin(species, r * Vec3(std::sin(th), 0.0, std::cos(th)));
    return ContrastMapPoint{r, th, resonant_contrast(d, coupling_of(s, pc))};
  });
}

// -- register census -------------------------------------------------------------

struct AccessibleSpin {
  std::size_t index = 0;  // into the bath
  Species species = Species::C13;
  double omega1 = 0.0;
  double omega2 = 0.0;
  double contrast = 0.0;
};

struct CensusEntry {
  std::vector<AccessibleSpin> criterion_i;  // contrast above threshold
  std::vector<AccessibleSpin> accessible;   // both criteria
  double sensing_radius_nm = 0.0;
};

/// Applies the contrast criterion to every spin, then the independent-driving
/// criterion against the conflict pool (spins with contrast >= prune_contrast
/// or within the sensing radius).
inline CensusEntry accessible_qubits(const SpinBath& bath, const DetectionParams& d, const PhysicalConstants& pc = {}) {
  d.validate();
  CensusEntry out;
  const std::size_t n = bath.size();
  if (n == 0) return out;

  std::vector<AccessibleSpin> all(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SpinCoupling sc = coupling_of(bath.spins[i], pc);
    const auto tf = transition_frequencies(sc);
    all[i] = {i, bath.spins[i].species, tf.omega1, tf.omega2, resonant_contrast(d, sc)};
    if (all[i].contrast > d.contrast_threshold) {
      out.criterion_i.push_back(all[i]);
      out.sensing_radius_nm = std::max(out.sensing_radius_nm, bath.spins[i].position.norm());
    }
  }

  struct Line {
    double omega;
    std::size_t owner;
  };
  std::vector<Line> pool;
  for (std::size_t i = 0; i < n; ++i) {
    if (all[i].contrast < d.prune_contrast && bath.spins[i].position.norm() > out.sensing_radius_nm) continue;
    pool.push_back({all[i].omega1, i});
    pool.push_back({all[i].omega2, i});
  }
  std::sort(pool.begin(), pool.end(), [](const Line& a, const Line& b) { return a.omega < b.omega; });

  const double df = d.resolution_hz();
  auto conflicts = [&](double w, std::size_t self) {
    auto it = std::lower_bound(pool.begin(), pool.end(), w - df, [](const Line& l, double v) { return l.omega < v; });
    for (; it != pool.end() && it->omega <= w + df; ++it)
      if (it->owner != self) return true;
    return false;
  };
  for (const auto& s : out.criterion_i)
    if (!conflicts(s.omega1, s.index) && !conflicts(s.omega2, s.index)) out.accessible.push_back(s);
  return out;
}

inline constexpr int kCensusMaxK = 30;

struct CensusAggregate {
  double concentration = 0.0;
  DetectionParams params;
  std::size_t realizations = 0;
  double mean_accessible = 0.0;
  double mean_criterion_i = 0.0;
  std::map<std::size_t, std::size_t> histogram;  // accessible count -> realizations
  std::vector<double> p_ge;                      // p_ge[k-1] = P(count >= k), k = 1..30
  std::vector<std::size_t> counts;               // per realization, accessible
  std::vector<std::size_t> counts_criterion_i;   // per realization

  double p_at_least(int k) const {
    if (k < 1 || k > kCensusMaxK) throw std::out_of_range("P(>=k) is tabulated for k = 1..30");
    return p_ge[static_cast<std::size_t>(k - 1)];
  }
};

inline CensusAggregate aggregate_census(double concentration, const DetectionParams& d,
                                        const std::vector<CensusEntry>& entries) {
  CensusAggregate agg;
  agg.concentration = concentration;
  agg.params = d;
  agg.realizations = entries.size();
  agg.p_ge.assign(kCensusMaxK, 0.0);
  if (entries.empty()) return agg;
  double sum = 0.0, sum_i = 0.0;
  for (const auto& e : entries) {
    const std::size_t c = e.accessible.size();
    agg.counts.push_back(c);
    agg.counts_criterion_i.push_back(e.criterion_i.size());
    sum += static_cast<double>(c);
    sum_i += static_cast<double>(e.criterion_i.size());
    agg.histogram[c]++;
    for (int k = 1; k <= kCensusMaxK; ++k)
      if (c >= static_cast<std::size_t>(k)) agg.p_ge[static_cast<std::size_t>(k - 1)] += 1.0;
  }
  const double m = static_cast<double>(entries.size());
  agg.mean_accessible = sum / m;
  agg.mean_criterion_i = sum_i / m;
  for (double& p : agg.p_ge) p /= m;
  return agg;
}

struct CensusSettings {
  LatticeSpec lattice;
  double volume_nm3 = 680.0;
  std::size_t realizations = 1000;
  std::uint64_t master_seed = 1;
  int threads = 0;
  PhysicalConstants constants;
};

/// Realization r uses the same placement draws at every concentration and for
/// every parameter set, so curves across the sweep share their randomness.
inline std::uint64_t realization_seed(std::uint64_t master, std::size_t realization) {
  return derive_seed(master, {0x63656E73ULL, static_cast<std::uint64_t>(realization)});
}

/// Result index: [concentration][params].
inline std::vector<std::vector<CensusAggregate>> census_campaign(const std::vector<double>& concentrations,
                                                                 const std::vector<DetectionParams>& params,
                                                                 const CensusSettings& s) {
  if (s.realizations < 1) throw std::invalid_argument("census needs at least one realization");
  for (const auto& d : params) d.validate();
  const auto sites = generate_supercell(s.lattice, s.volume_nm3);
  const std::size_t nc = concentrations.size(), np = params.size(), nr = s.realizations;

  const auto entries = parallel_map(nc * nr, s.threads, [&](std::size_t job) {
    const std::size_t ci = job / nr, r = job % nr;
    const auto [c13, si29] = concentration_split(concentrations[ci]);
    const SpinBath bath = sample_bath(sites, {c13, si29, realization_seed(s.master_seed, r)}, s.volume_nm3);
    std::vector<CensusEntry> per_params;
    per_params.reserve(np);
    for (const auto& d : params) per_params.push_back(accessible_qubits(bath, d, s.constants));
    return per_params;
  });

  std::vector<std::vector<CensusAggregate>> out(nc);
  for (std::size_t ci = 0; ci < nc; ++ci)
    for (std::size_t pi = 0; pi < np; ++pi) {
      std::vector<CensusEntry> column;
      column.reserve(nr);
      for (std::size_t r = 0; r < nr; ++r) column.push_back(entries[ci * nr + r][pi]);
      out[ci].push_back(aggregate_census(concentrations[ci], params[pi], column));
    }
  return out;
}

}  // namespace qmn
