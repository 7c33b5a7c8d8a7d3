#pragma once

// Campaign runner: one function per subcommand, each writing CSV/JSON into
// the output directory plus a manifest that can be fed back as a config.
// All parallelism is requested here; compute modules only see a thread count.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qmn/coherence.hpp"
#include "qmn/config.hpp"
#include "qmn/detection.hpp"
#include "qmn/gates.hpp"
#include "qmn/lattice.hpp"
#include "qmn/seeding.hpp"

#ifndef QMN_VERSION
#define QMN_VERSION "0.1.0"
#endif

namespace qmn {

namespace fs = std::filesystem;

/// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    row_strings(header);
  }

  template <typename... T>
  void row(const T&... cells) {
    std::vector<std::string> v{cell(cells)...};
    row_strings(v);
  }

  void row_strings(const std::vector<std::string>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << v[i];
    out_ << '\n';
  }

 private:
  static std::string cell(double x) { return format_double(x); }
  static std::string cell(int x) { return std::to_string(x); }
  static std::string cell(std::size_t x) { return std::to_string(x); }
  static std::string cell(const std::string& x) { return x; }

  std::ofstream out_;
};

/// Where a run writes and what it has written so far.
class RunContext {
 public:
  RunContext(CampaignConfig cfg, std::string subcommand, std::string figure = {})
      : cfg(std::move(cfg)), subcommand(std::move(subcommand)), figure(std::move(figure)) {}

  CampaignConfig cfg;
  std::string subcommand;
  std::string figure;
  std::vector<std::string> outputs;
  nlohmann::json summary = nlohmann::json::object();

  fs::path dir() const { return cfg.output.directory; }

  CsvWriter csv(const std::string& name, const std::vector<std::string>& header) {
    fs::create_directories(dir());
    outputs.push_back(name);
    return CsvWriter(dir() / name, header);
  }

  void json(const std::string& name, const nlohmann::json& j) {
    fs::create_directories(dir());
    std::ofstream f(dir() / name);
    if (!f) throw std::runtime_error("cannot open " + (dir() / name).string() + " for writing");
    f << j.dump(2) << '\n';
    outputs.push_back(name);
  }
};

// -- shared pieces ------------------------------------------------------------------

/// The single-bath subcommands (lattice, spectrum) use realization 0 of the census.
inline SpinBath campaign_bath(const CampaignConfig& c, const std::vector<Site>& sites) {
  const auto [c13, si29] = concentration_split(c.lattice.concentration);
  return sample_bath(sites, {c13, si29, realization_seed(c.master_seed, 0)}, c.lattice.volume_nm3);
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  if (n == 1) return {lo};
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
  return v;
}

inline std::string sequence_tag(const SequenceBlock& s) {
  std::ostringstream os;
  os << "N" << s.n_pi << "_tau" << s.tau_n_us << "us";
  return os.str();
}

inline nlohmann::json json_number(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

// -- subcommands --------------------------------------------------------------------

inline void run_lattice(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto sites = generate_supercell(LatticeSpec{}, c.lattice.volume_nm3);
  const SpinBath bath = campaign_bath(c, sites);
  const BathStatistics st = bath_statistics(bath);
  std::size_t n_c = 0;
  for (const auto& s : sites) n_c += s.element == Element::C;
  const auto [c13, si29] = concentration_split(c.lattice.concentration);

  nlohmann::json stats = {{"volume_nm3", c.lattice.volume_nm3},
                          {"unit_cells", unit_cell_count(LatticeSpec{}, c.lattice.volume_nm3)},
                          {"sites", sites.size()},
                          {"carbon_sites", n_c},
                          {"silicon_sites", sites.size() - n_c},
                          {"concentration", c.lattice.concentration},
                          {"c13_fraction", c13},
                          {"si29_fraction", si29},
                          {"c13_count", st.c13_count},
                          {"si29_count", st.si29_count},
                          {"mean_nearest_neighbor_nm", json_number(st.mean_nearest_neighbor())},
                          {"min_distance_to_defect_nm", json_number(st.min_distance_to_origin())},
                          {"seed", bath.seed}};
  ctx.summary = stats;
  if (c.output.json) {
    ctx.json("lattice_stats.json", stats);
    ctx.json("bath.json", bath_to_json(bath));
  }
  if (c.output.csv) {
    auto w = ctx.csv("bath.csv", {"species", "x_nm", "y_nm", "z_nm"});
    for (const auto& s : bath.spins)
      w.row(std::string(to_string(s.species)), s.position.x(), s.position.y(), s.position.z());
  }
}

inline void run_spectrum(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto sites = generate_supercell(LatticeSpec{}, c.lattice.volume_nm3);
  const SpinBath bath = campaign_bath(c, sites);
  std::vector<SpinCoupling> couplings;
  for (const auto& s : bath.spins)
    if (s.position.norm() <= c.spectrum.bath_radius_nm) couplings.push_back(coupling_of(s, c.constants()));
  if (couplings.empty()) throw std::runtime_error("no bath spins within analysis.spectrum.bath_radius_nm");
  const auto grid = spectrum_grid(couplings, c.spectrum.margin_hz, c.spectrum.step_hz);
  const auto pts = spectrum(couplings, grid, c.detection(), c.threads, c.spectrum.window_hz);

  double deepest = 0.0;
  for (const auto& p : pts) deepest = std::max(deepest, p.contrast);
  ctx.summary = {{"spins", couplings.size()}, {"grid_points", grid.size()}, {"max_contrast", deepest}};
  if (c.output.csv) {
    auto w = ctx.csv("spectrum.csv", {"omega_hz", "contrast"});
    for (const auto& p : pts) w.row(p.omega_hz, p.contrast);
  }
  if (c.output.json) {
    nlohmann::json lines = nlohmann::json::array();
    for (const auto& sc : couplings) {
      const auto tf = transition_frequencies(sc);
      lines.push_back({{"omega1_hz", tf.omega1}, {"omega2_hz", tf.omega2}, {"a_zz_hz", sc.hv.a_par}, {"a_perp_hz", sc.hv.a_perp()}});
    }
    ctx.json("spectrum_lines.json", lines);
  }
}

inline void run_map(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto r = linspace(c.map.r_min_nm, c.map.r_max_nm, c.map.r_points);
  const auto th = linspace(0.0, std::numbers::pi, c.map.theta_points);
  const auto pts = contrast_map(c.map.species, c.detection(), r, th, c.constants(), c.threads);
  std::size_t above = 0;
  for (const auto& p : pts) above += p.contrast > c.census.contrast_threshold;
  ctx.summary = {{"points", pts.size()}, {"above_threshold", above}};
  if (c.output.csv) {
    auto w = ctx.csv("map.csv", {"r_nm", "theta_rad", "contrast"});
    for (const auto& p : pts) w.row(p.r, p.theta, p.contrast);
  }
}

inline constexpr int kCensusCsvMinK = 6;
inline constexpr int kCensusCsvMaxK = 12;

inline void run_census(RunContext& ctx, const std::vector<double>& concentrations) {
  const auto& c = ctx.cfg;
  const auto seqs = c.census_sequences();
  std::vector<DetectionParams> params;
  for (const auto& s : seqs) params.push_back(c.detection(s));
  CensusSettings settings;
  settings.volume_nm3 = c.lattice.volume_nm3;
  settings.realizations = c.census.realizations;
  settings.master_seed = c.master_seed;
  settings.threads = c.threads;
  settings.constants = c.constants();
  const auto result = census_campaign(concentrations, params, settings);

  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t pi = 0; pi < seqs.size(); ++pi) {
    if (c.output.csv) {
      const std::string name = seqs.size() == 1 ? "census.csv" : "census_" + sequence_tag(seqs[pi]) + ".csv";
      std::vector<std::string> header = {"concentration", "mean"};
      for (int k = kCensusCsvMinK; k <= kCensusCsvMaxK; ++k) header.push_back("p_ge_" + std::to_string(k));
      auto w = ctx.csv(name, header);
      for (std::size_t ci = 0; ci < concentrations.size(); ++ci) {
        const auto& a = result[ci][pi];
        std::vector<std::string> cells = {format_double(a.concentration), format_double(a.mean_accessible)};
        for (int k = kCensusCsvMinK; k <= kCensusCsvMaxK; ++k) cells.push_back(format_double(a.p_at_least(k)));
        w.row_strings(cells);
      }
    }
    for (std::size_t ci = 0; ci < concentrations.size(); ++ci) {
      const auto& a = result[ci][pi];
      nlohmann::json hist = nlohmann::json::object();
      for (const auto& [count, n] : a.histogram) hist[std::to_string(count)] = n;
      doc.push_back({{"n_pi", seqs[pi].n_pi},
                     {"tau_n_us", seqs[pi].tau_n_us},
                     {"concentration", a.concentration},
                     {"realizations", a.realizations},
                     {"mean_accessible", a.mean_accessible},
                     {"mean_criterion_i", a.mean_criterion_i},
                     {"resolution_hz", a.params.resolution_hz()},
                     {"histogram", hist},
                     {"p_ge", a.p_ge}});
    }
  }
  ctx.summary = doc;
  if (c.output.json) ctx.json("census.json", doc);
}

inline CoherenceSettings coherence_settings(const CampaignConfig& c) {
  CoherenceSettings s;
  s.bath_radius_nm = c.coherence.bath_radius_nm;
  s.n_pi = c.coherence.n_pi;
  s.tau_grid = uniform_tau_grid(c.coherence.n_pi, c.coherence.t_max_ms * 1e-3, static_cast<std::size_t>(c.coherence.points));
  s.n_distributions = c.coherence.distributions;
  s.n_bathstates = c.coherence.bath_states;
  s.master_seed = c.master_seed;
  s.averaging = c.coherence.averaging;
  s.cce = c.cce();
  s.constants = c.constants();
  return s;
}

inline nlohmann::json fit_json(const CoherenceCurve& curve) {
  try {
    const T2Fit f = fit_t2(curve);
    return {{"t2_s", f.t2}, {"stretch_n", f.stretch_exponent}, {"residual", f.residual}, {"decayed", true}};
  } catch (const NoDecayError&) {
    return {{"t2_s", nullptr}, {"stretch_n", nullptr}, {"residual", nullptr}, {"decayed", false}};
  }
}

/// Curve and fit at lattice.concentration: the distribution-averaged curve
/// goes to coherence.csv, per-distribution fits to the JSON summary.
inline void run_coherence(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const CoherenceSettings s = coherence_settings(c);
  const auto curves = distribution_curves(c.lattice.concentration, coherence_sites(s), s);
  CoherenceCurve mean = curves.front();
  for (std::size_t d = 1; d < curves.size(); ++d)
    for (std::size_t t = 0; t < mean.l_values.size(); ++t) mean.l_values[t] += curves[d].l_values[t];
  for (cplx& l : mean.l_values) l /= static_cast<double>(curves.size());

  const ConcentrationPoint pt = summarize_distributions(c.lattice.concentration, curves);
  nlohmann::json fit = fit_json(mean);
  fit["concentration"] = c.lattice.concentration;
  fit["median_t2_s"] = json_number(pt.median_t2);
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t d = 0; d < curves.size(); ++d) per.push_back({{"t2_s", json_number(pt.t2[d])}, {"stretch_n", json_number(pt.stretch[d])}});
  fit["distributions"] = per;
  ctx.summary = fit;

  if (c.output.csv) {
    auto w = ctx.csv("coherence.csv", {"t_seconds", "abs_L", "re_L", "im_L"});
    for (std::size_t t = 0; t < mean.times.size(); ++t)
      w.row(mean.times[t], std::abs(mean.l_values[t]), mean.l_values[t].real(), mean.l_values[t].imag());
  }
  if (c.output.json) ctx.json("coherence_fit.json", fit);
}

inline void run_coherence_sweep(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto pts = coherence_vs_concentration(c.lattice.concentrations, coherence_settings(c));
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& p : pts) {
    nlohmann::json t2 = nlohmann::json::array(), n = nlohmann::json::array();
    for (std::size_t d = 0; d < p.t2.size(); ++d) {
      t2.push_back(json_number(p.t2[d]));
      n.push_back(json_number(p.stretch[d]));
    }
    doc.push_back({{"concentration", p.concentration}, {"median_t2_s", json_number(p.median_t2)},
                   {"t2_s", t2}, {"stretch_n", n}, {"no_decay", p.no_decay}});
  }
  ctx.summary = doc;
  if (c.output.csv) {
    auto w = ctx.csv("coherence_sweep.csv", {"concentration", "median_t2_s", "no_decay"});
    for (const auto& p : pts) w.row(p.concentration, p.median_t2, p.no_decay);
  }
  if (c.output.json) ctx.json("coherence_sweep.json", doc);
}

inline std::vector<SpinCoupling> cnot_couplings(const CampaignConfig& c) {
  if (c.cnot.couplings_file.empty()) return reference_bath(c.constants());
  std::ifstream f(c.cnot.couplings_file);
  if (!f) throw std::runtime_error("analysis.cnot.couplings_file: cannot open " + c.cnot.couplings_file);
  return couplings_from_json(nlohmann::json::parse(f));
}

inline void run_cnot(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto spins = cnot_couplings(c);
  if (spins.size() < 2) throw std::runtime_error("CNOT needs at least two spins");
  const auto entries = fidelity_matrix(spins, c.gates(), c.threads);
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : entries)
    doc.push_back({{"control_idx", e.control}, {"target_idx", e.target}, {"fidelity_frozen", e.fidelity_frozen},
                   {"fidelity_active", e.fidelity_active}, {"disentanglement_residual", e.residual},
                   {"residual_warning", e.residual_warning}});
  ctx.summary = doc;
  if (c.output.csv) {
    auto w = ctx.csv("cnot.csv", {"control_idx", "target_idx", "fidelity_frozen", "fidelity_active"});
    for (const auto& e : entries) w.row(e.control, e.target, e.fidelity_frozen, e.fidelity_active);
  }
  if (c.output.json) {
    ctx.json("cnot.json", {{"couplings", couplings_to_json(spins)}, {"pairs", doc}});
  }
}

/// Electron readout versus final pi/2 phase for a single on-axis 13C spin,
/// with the drive on resonance and detuned far away.
inline void run_readout(RunContext& ctx, double r_nm) {
  const auto& c = ctx.cfg;
  const DetectionParams d = c.detection();
  const SpinCoupling sc = coupling_of(make_spin(Species::C13, Vec3(0.0, 0.0, r_nm)), c.constants());
  DdrfParams on = d.resonant(sc);
  DdrfParams off = on;
  off.omega += 20.0 / (2.0 * d.n_pi * d.tau_n);
  const auto sig_on = readout_signal(on, sc, targeted_schedule(on, sc, d.phase_rule), 48);
  const auto sig_off = readout_signal(off, sc, phase_schedule(off, off.omega, off.omega, d.phase_rule), 48);
  ctx.summary = {{"r_nm", r_nm}, {"contrast_driven", sig_on.contrast()}, {"contrast_detuned", sig_off.contrast()}};
  if (c.output.csv) {
    auto w = ctx.csv("readout.csv", {"phi_rad", "p_32_detuned", "p_32_driven"});
    for (std::size_t i = 0; i < sig_on.phases.size(); ++i) w.row(sig_on.phases[i], sig_off.p_32[i], sig_on.p_32[i]);
  }
  if (c.output.json) ctx.json("readout.json", ctx.summary);
}

// -- reproduce ------------------------------------------------------------------------

inline const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids = {"fig2b", "fig3a", "fig3b", "fig4a", "fig4b", "fig4cd", "S8", "S9b", "fig5b"};
  return ids;
}

inline SequenceBlock long_sequence() {
  SequenceBlock s;
  s.n_pi = 100;
  s.tau_n_us = 93.0;
  return s;
}

inline SequenceBlock short_sequence() {
  SequenceBlock s;
  s.n_pi = 20;
  s.tau_n_us = 46.0;
  return s;
}

inline constexpr double kNaturalAbundance = 0.058;

/// Adjusts `c` to the canned setup for one figure. Scale knobs (realizations,
/// distributions, output directory, seed) are left to the caller.
inline void apply_figure(const std::string& fig, CampaignConfig& c) {
  if (fig == "fig2b") {
    c.sequence = long_sequence();
  } else if (fig == "fig3a") {
    c.sequence = long_sequence();
  } else if (fig == "fig3b") {
    c.sequence = short_sequence();
  } else if (fig == "fig4a") {
    c.lattice.concentrations = {kNaturalAbundance};
    c.census.sequences = {long_sequence(), short_sequence()};
  } else if (fig == "fig4b") {
    c.census.sequences = {long_sequence()};
  } else if (fig == "fig4cd") {
    c.census.sequences = {long_sequence(), short_sequence()};
  } else if (fig == "S8") {
    c.sequence = long_sequence();
    c.lattice.concentration = kNaturalAbundance;
  } else if (fig == "S9b") {
  } else if (fig == "fig5b") {
    c.cnot.couplings_file.clear();
  } else {
    throw std::invalid_argument("unknown figure id '" + fig + "'");
  }
}

inline void run_figure(RunContext& ctx) {
  const std::string& f = ctx.figure;
  if (f == "fig2b") run_readout(ctx, 1.0);
  else if (f == "fig3a" || f == "fig3b") run_map(ctx);
  else if (f == "fig4a" || f == "fig4b" || f == "fig4cd") run_census(ctx, ctx.cfg.lattice.concentrations);
  else if (f == "S8") run_spectrum(ctx);
  else if (f == "S9b") run_coherence_sweep(ctx);
  else if (f == "fig5b") run_cnot(ctx);
  else throw std::invalid_argument("unknown figure id '" + f + "'");
}

// -- manifest ---------------------------------------------------------------------------

inline nlohmann::json versions() {
  return {{"qmn", QMN_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
#if defined(__clang__)
          {"compiler", std::string("clang ") + __clang_version__},
#elif defined(__GNUC__)
          {"compiler", std::string("gcc ") + __VERSION__},
#else
          {"compiler", "unknown"},
#endif
          {"cplusplus", __cplusplus}};
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline constexpr int kManifestVersion = 1;

/// Runs the subcommand in `ctx` and writes manifest.json beside the outputs.
inline void run(RunContext& ctx) {
  static const std::map<std::string, void (*)(RunContext&)> table = {
      {"lattice", run_lattice},
      {"spectrum", run_spectrum},
      {"map", run_map},
      {"census", [](RunContext& x) { run_census(x, x.cfg.lattice.concentrations); }},
      {"coherence", run_coherence},
      {"cnot", run_cnot},
      {"reproduce", run_figure}};
  const auto it = table.find(ctx.subcommand);
  if (it == table.end()) throw std::invalid_argument("unknown subcommand '" + ctx.subcommand + "'");
  if (const Diagnostics d = validate(ctx.cfg); has_errors(d)) throw ConfigError(d);

  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  it->second(ctx);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json m = {{"manifest_version", kManifestVersion},
                      {"subcommand", ctx.subcommand},
                      {"config", to_json(ctx.cfg)},
                      {"master_seed", ctx.cfg.master_seed},
                      {"threads", resolve_threads(ctx.cfg.threads)},
                      {"versions", versions()},
                      {"started_utc", started},
                      {"wall_time_s", wall},
                      {"outputs", ctx.outputs},
                      {"summary", ctx.summary}};
  if (!ctx.figure.empty()) m["figure"] = ctx.figure;
  fs::create_directories(ctx.dir());
  std::ofstream(ctx.dir() / "manifest.json") << m.dump(2) << '\n';
}

}  // namespace qmn
