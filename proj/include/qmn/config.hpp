#pragma once

// Campaign configuration: one JSON document, every key known in advance.
// Parsing never throws on bad input; it collects diagnostics that name the
// offending field so a user sees every problem at once.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmn/coherence.hpp"
#include "qmn/detection.hpp"
#include "qmn/gates.hpp"
#include "qmn/physics.hpp"

namespace qmn {

struct Diagnostic {
  enum class Severity { error, warning };
  Severity severity = Severity::error;
  std::string field;
  std::string message;

  std::string str() const {
    return std::string(severity == Severity::error ? "error: " : "warning: ") + field + ": " + message;
  }
};

using Diagnostics = std::vector<Diagnostic>;

inline bool has_errors(const Diagnostics& d) {
  for (const auto& x : d)
    if (x.severity == Diagnostic::Severity::error) return true;
  return false;
}

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(Diagnostics d) : std::runtime_error(join(d)), diagnostics(std::move(d)) {}
  Diagnostics diagnostics;

 private:
  static std::string join(const Diagnostics& d) {
    std::string s;
    for (const auto& x : d) {
      if (x.severity != Diagnostic::Severity::error) continue;
      if (!s.empty()) s += "\n";
      s += x.str();
    }
    return s;
  }
};

// -- blocks ---------------------------------------------------------------------

struct LatticeBlock {
  double volume_nm3 = 680.0;
  double concentration = 0.058;  // total 13C + 29Si fraction for single-bath runs
  std::vector<double> concentrations = {0.002, 0.004, 0.006, 0.008, 0.01, 0.015, 0.02, 0.03, 0.04, 0.058};
};

struct SequenceBlock {
  int n_pi = 100;
  double tau_n_us = 93.0;
  double target_angle_rad = std::numbers::pi;
  std::optional<double> rabi_hz;  // overrides target_angle_rad when set
  double phi_initial_rad = 0.0;
  FinalPhaseRule final_phase = FinalPhaseRule::half_step;

  double tau_n() const { return tau_n_us * 1e-6; }
  double theta() const { return rabi_hz ? *rabi_hz * kTwoPi * 2.0 * n_pi * tau_n() : target_angle_rad; }
  double rabi() const { return rabi_hz ? *rabi_hz : calibrate_rabi(n_pi, tau_n(), target_angle_rad); }
};

struct SpectrumBlock {
  double margin_hz = 5e3;
  double step_hz = 25.0;
  /// Only spins this close contribute measurably; the rest only cost time.
  double bath_radius_nm = 3.0;
  /// Spins whose transitions are all farther from the drive than this are
  /// treated as undriven.
  double window_hz = 2e3;
};

struct MapBlock {
  Species species = Species::C13;
  double r_min_nm = 0.3;
  double r_max_nm = 3.0;
  int r_points = 28;
  int theta_points = 19;
};

struct CensusBlock {
  std::size_t realizations = 1000;
  std::vector<SequenceBlock> sequences;  // empty: the top-level sequence
  double contrast_threshold = 0.5;
  double delta_f_scale = 1.0;
  double prune_contrast = 0.01;
};

struct CoherenceBlock {
  int n_pi = 1;
  double t_max_ms = 20.0;
  int points = 60;
  double bath_radius_nm = 8.0;
  std::size_t distributions = 5;
  std::size_t bath_states = 5;
  int cce_order = 2;
  double pair_cutoff_nm = 2.0;
  double strong_coupling_hz = 1e3;
  StateAveraging averaging = StateAveraging::per_cluster;
};

struct CnotBlock {
  int n_pi = 32;
  double tau_us = 100.0;
  std::string couplings_file;  // empty: built-in reference register
  bool snap_tau = true;
};

struct OutputBlock {
  std::string directory = "qmn_out";
  bool csv = true;
  bool json = true;
};

struct CampaignConfig {
  std::uint64_t master_seed = 1;
  int threads = 0;
  double b0_tesla = 0.05;
  LatticeBlock lattice;
  SequenceBlock sequence;
  SpectrumBlock spectrum;
  MapBlock map;
  CensusBlock census;
  CoherenceBlock coherence;
  CnotBlock cnot;
  OutputBlock output;

  PhysicalConstants constants() const {
    PhysicalConstants pc;
    pc.b0_tesla = b0_tesla;
    return pc;
  }

  DetectionParams detection(const SequenceBlock& s) const {
    DetectionParams d;
    d.n_pi = s.n_pi;
    d.tau_n = s.tau_n();
    d.theta = s.theta();
    d.phi_initial = s.phi_initial_rad;
    d.phase_rule = s.final_phase;
    d.contrast_threshold = census.contrast_threshold;
    d.resolution_scale = census.delta_f_scale;
    d.prune_contrast = census.prune_contrast;
    return d;
  }
  DetectionParams detection() const { return detection(sequence); }

  std::vector<SequenceBlock> census_sequences() const {
    return census.sequences.empty() ? std::vector<SequenceBlock>{sequence} : census.sequences;
  }

  GateParams gates() const {
    GateParams g;
    g.n_pi = cnot.n_pi;
    g.tau_target = cnot.tau_us * 1e-6;
    g.snap_tau = cnot.snap_tau;
    g.phase_rule = sequence.final_phase;
    return g;
  }

  CceOptions cce() const {
    CceOptions o;
    o.order = coherence.cce_order;
    o.pair_cutoff_nm = coherence.pair_cutoff_nm;
    o.strong_coupling_hz = coherence.strong_coupling_hz;
    o.threads = threads;
    return o;
  }
};

// -- reading ----------------------------------------------------------------------

namespace detail {

/// Walks one JSON object, rejecting keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path, Diagnostics& diag)
      : j_(j), path_(std::move(path)), diag_(diag) {
    if (!j_.is_object()) error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  ~ObjectReader() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) error(field(k), "unknown key");
  }

  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const nlohmann::json* find(const std::string& key) {
    seen_.insert(key);
    if (!j_.is_object()) return nullptr;
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const auto* v = find(key)) {
      if (v->is_number()) out = v->get<double>();
      else error(field(key), "expected a number");
    }
  }

  void optional_number(const std::string& key, std::optional<double>& out) {
    if (const auto* v = find(key)) {
      if (v->is_null()) out.reset();
      else if (v->is_number()) out = v->get<double>();
      else error(field(key), "expected a number or null");
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const auto* v = find(key)) {
      if (v->is_number_integer() && (std::is_signed_v<Int> || v->is_number_unsigned())) out = v->get<Int>();
      else error(field(key), std::is_signed_v<Int> ? "expected an integer" : "expected a non-negative integer");
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      if (v->is_boolean()) out = v->get<bool>();
      else error(field(key), "expected true or false");
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) {
      if (v->is_string()) out = v->get<std::string>();
      else error(field(key), "expected a string");
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) return error(field(key), "expected an array of numbers");
      std::vector<double> tmp;
      for (const auto& e : *v) {
        if (!e.is_number()) return error(field(key), "expected an array of numbers");
        tmp.push_back(e.get<double>());
      }
      out = std::move(tmp);
    }
  }

  void error(const std::string& f, const std::string& msg) { diag_.push_back({Diagnostic::Severity::error, f, msg}); }

  Diagnostics& diagnostics() { return diag_; }

 private:
  const nlohmann::json& j_;
  std::string path_;
  Diagnostics& diag_;
  std::set<std::string> seen_;
};

inline void read_sequence(const nlohmann::json& j, const std::string& path, SequenceBlock& s, Diagnostics& diag) {
  ObjectReader r(j, path, diag);
  r.integer("n_pi", s.n_pi);
  r.number("tau_n_us", s.tau_n_us);
  r.number("target_angle_rad", s.target_angle_rad);
  r.optional_number("rabi_hz", s.rabi_hz);
  r.number("phi_initial_rad", s.phi_initial_rad);
  std::string rule = s.final_phase == FinalPhaseRule::half_step ? "half_step" : "full_step";
  r.string("final_phase_rule", rule);
  if (rule == "half_step") s.final_phase = FinalPhaseRule::half_step;
  else if (rule == "full_step") s.final_phase = FinalPhaseRule::full_step;
  else r.error(r.field("final_phase_rule"), "expected \"half_step\" or \"full_step\"");
}

}  // namespace detail

/// Fills `cfg` from `j`; missing keys keep their current values.
inline Diagnostics read_config(const nlohmann::json& j, CampaignConfig& cfg) {
  Diagnostics diag;
  {
    detail::ObjectReader root(j, "", diag);
    root.integer("master_seed", cfg.master_seed);
    root.integer("threads", cfg.threads);
    root.number("b0_tesla", cfg.b0_tesla);

    if (const auto* v = root.find("lattice")) {
      detail::ObjectReader r(*v, "lattice", diag);
      r.number("volume_nm3", cfg.lattice.volume_nm3);
      r.number("concentration", cfg.lattice.concentration);
      r.numbers("concentrations", cfg.lattice.concentrations);
    }
    if (const auto* v = root.find("sequence")) detail::read_sequence(*v, "sequence", cfg.sequence, diag);

    if (const auto* a = root.find("analysis")) {
      detail::ObjectReader an(*a, "analysis", diag);
      if (const auto* v = an.find("spectrum")) {
        detail::ObjectReader r(*v, "analysis.spectrum", diag);
        r.number("margin_hz", cfg.spectrum.margin_hz);
        r.number("step_hz", cfg.spectrum.step_hz);
        r.number("bath_radius_nm", cfg.spectrum.bath_radius_nm);
        r.number("window_hz", cfg.spectrum.window_hz);
      }
      if (const auto* v = an.find("map")) {
        detail::ObjectReader r(*v, "analysis.map", diag);
        std::string sp(to_string(cfg.map.species));
        r.string("species", sp);
        if (sp == "C13") cfg.map.species = Species::C13;
        else if (sp == "Si29") cfg.map.species = Species::Si29;
        else r.error(r.field("species"), "expected \"C13\" or \"Si29\"");
        r.number("r_min_nm", cfg.map.r_min_nm);
        r.number("r_max_nm", cfg.map.r_max_nm);
        r.integer("r_points", cfg.map.r_points);
        r.integer("theta_points", cfg.map.theta_points);
      }
      if (const auto* v = an.find("census")) {
        detail::ObjectReader r(*v, "analysis.census", diag);
        r.integer("realizations", cfg.census.realizations);
        r.number("contrast_threshold", cfg.census.contrast_threshold);
        r.number("delta_f_scale", cfg.census.delta_f_scale);
        r.number("prune_contrast", cfg.census.prune_contrast);
        if (const auto* seqs = r.find("sequences")) {
          if (!seqs->is_array()) {
            r.error(r.field("sequences"), "expected an array of sequence blocks");
          } else {
            cfg.census.sequences.clear();
            for (std::size_t i = 0; i < seqs->size(); ++i) {
              SequenceBlock s = cfg.sequence;
              detail::read_sequence((*seqs)[i], r.field("sequences") + "[" + std::to_string(i) + "]", s, diag);
              cfg.census.sequences.push_back(s);
            }
          }
        }
      }
      if (const auto* v = an.find("coherence")) {
        detail::ObjectReader r(*v, "analysis.coherence", diag);
        auto& c = cfg.coherence;
        r.integer("n_pi", c.n_pi);
        r.number("t_max_ms", c.t_max_ms);
        r.integer("points", c.points);
        r.number("bath_radius_nm", c.bath_radius_nm);
        r.integer("distributions", c.distributions);
        r.integer("bath_states", c.bath_states);
        r.integer("cce_order", c.cce_order);
        r.number("pair_cutoff_nm", c.pair_cutoff_nm);
        r.number("strong_coupling_hz", c.strong_coupling_hz);
        std::string avg = c.averaging == StateAveraging::per_cluster ? "per_cluster" : "per_state";
        r.string("averaging", avg);
        if (avg == "per_cluster") c.averaging = StateAveraging::per_cluster;
        else if (avg == "per_state") c.averaging = StateAveraging::per_state;
        else r.error(r.field("averaging"), "expected \"per_cluster\" or \"per_state\"");
      }
      if (const auto* v = an.find("cnot")) {
        detail::ObjectReader r(*v, "analysis.cnot", diag);
        r.integer("n_pi", cfg.cnot.n_pi);
        r.number("tau_us", cfg.cnot.tau_us);
        r.string("couplings_file", cfg.cnot.couplings_file);
        r.boolean("snap_tau", cfg.cnot.snap_tau);
      }
    }

    if (const auto* v = root.find("output")) {
      detail::ObjectReader r(*v, "output", diag);
      r.string("directory", cfg.output.directory);
      if (const auto* f = r.find("formats")) {
        if (!f->is_array() || f->empty()) {
          r.error(r.field("formats"), "expected a non-empty array drawn from \"csv\", \"json\"");
        } else {
          cfg.output.csv = cfg.output.json = false;
          for (const auto& e : *f) {
            const std::string s = e.is_string() ? e.get<std::string>() : "";
            if (s == "csv") cfg.output.csv = true;
            else if (s == "json") cfg.output.json = true;
            else r.error(r.field("formats"), "unknown format " + e.dump());
          }
        }
      }
    }
  }
  return diag;
}

// -- validation ---------------------------------------------------------------------

namespace detail {

inline void check(Diagnostics& d, bool ok, const std::string& field, const std::string& msg) {
  if (!ok) d.push_back({Diagnostic::Severity::error, field, msg});
}

inline void check_sequence(Diagnostics& d, const SequenceBlock& s, const std::string& path, double b0) {
  check(d, s.n_pi >= 1, path + ".n_pi", "must be >= 1");
  check(d, s.tau_n_us > 0.0, path + ".tau_n_us", "must be positive");
  check(d, s.target_angle_rad >= 0.0, path + ".target_angle_rad", "must be non-negative");
  if (s.rabi_hz) check(d, *s.rabi_hz >= 0.0, path + ".rabi_hz", "must be non-negative");
  check(d, std::isfinite(s.phi_initial_rad), path + ".phi_initial_rad", "must be finite");
  if (s.n_pi < 1 || !(s.tau_n_us > 0.0) || !(b0 > 0.0)) return;
  // The slowest bath species sets the tightest bound.
  const double larmor = std::min(std::abs(gyromagnetic_ratio(Species::C13)), std::abs(gyromagnetic_ratio(Species::Si29))) * b0;
  if (!rotating_wave_ok(s.rabi(), larmor))
    d.push_back({Diagnostic::Severity::warning, s.rabi_hz ? path + ".rabi_hz" : path + ".target_angle_rad",
                 "Rabi amplitude " + std::to_string(s.rabi()) + " Hz exceeds w_L/20 = " + std::to_string(larmor / 20.0) +
                     " Hz; the rotating-wave approximation is not reliable"});
}

}  // namespace detail

inline Diagnostics validate(const CampaignConfig& c) {
  using detail::check;
  Diagnostics d;
  check(d, c.b0_tesla > 0.0, "b0_tesla", "must be positive");
  check(d, c.threads >= 0, "threads", "must be >= 0 (0 = all cores)");
  check(d, c.lattice.volume_nm3 > 0.0, "lattice.volume_nm3", "must be positive");
  check(d, c.lattice.concentration >= 0.0 && c.lattice.concentration <= 1.0, "lattice.concentration", "must lie in [0, 1]");
  check(d, !c.lattice.concentrations.empty(), "lattice.concentrations", "must not be empty");
  for (double x : c.lattice.concentrations)
    check(d, x >= 0.0 && x <= 1.0, "lattice.concentrations", "entries must lie in [0, 1]");
  detail::check_sequence(d, c.sequence, "sequence", c.b0_tesla);

  check(d, c.spectrum.step_hz > 0.0, "analysis.spectrum.step_hz", "must be positive");
  check(d, c.spectrum.margin_hz >= 0.0, "analysis.spectrum.margin_hz", "must be non-negative");
  check(d, c.spectrum.bath_radius_nm > 0.0, "analysis.spectrum.bath_radius_nm", "must be positive");
  check(d, c.spectrum.window_hz > 0.0, "analysis.spectrum.window_hz", "must be positive");

  check(d, c.map.r_min_nm > kMinMapRadiusNm, "analysis.map.r_min_nm", "must exceed 0.1 nm");
  check(d, c.map.r_max_nm >= c.map.r_min_nm, "analysis.map.r_max_nm", "must be >= r_min_nm");
  check(d, c.map.r_points >= 1, "analysis.map.r_points", "must be >= 1");
  check(d, c.map.theta_points >= 1, "analysis.map.theta_points", "must be >= 1");

  check(d, c.census.realizations >= 1, "analysis.census.realizations", "must be >= 1");
  check(d, c.census.delta_f_scale >= 0.0, "analysis.census.delta_f_scale", "must be non-negative");
  check(d, c.census.contrast_threshold >= 0.0 && c.census.contrast_threshold <= 1.0, "analysis.census.contrast_threshold",
        "must lie in [0, 1]");
  check(d, c.census.prune_contrast >= 0.0, "analysis.census.prune_contrast", "must be non-negative");
  for (std::size_t i = 0; i < c.census.sequences.size(); ++i)
    detail::check_sequence(d, c.census.sequences[i], "analysis.census.sequences[" + std::to_string(i) + "]", c.b0_tesla);

  const auto& co = c.coherence;
  check(d, co.n_pi >= 1, "analysis.coherence.n_pi", "must be >= 1");
  check(d, co.t_max_ms > 0.0, "analysis.coherence.t_max_ms", "must be positive");
  check(d, co.points >= static_cast<int>(kMinFitPoints), "analysis.coherence.points", "must be >= 8 for the T2 fit");
  check(d, co.bath_radius_nm > 0.0, "analysis.coherence.bath_radius_nm", "must be positive");
  check(d, co.distributions >= 1, "analysis.coherence.distributions", "must be >= 1");
  check(d, co.bath_states >= 1, "analysis.coherence.bath_states", "must be >= 1");
  check(d, co.cce_order == 1 || co.cce_order == 2, "analysis.coherence.cce_order", "must be 1 or 2");
  check(d, co.pair_cutoff_nm >= 0.0, "analysis.coherence.pair_cutoff_nm", "must be non-negative");

  check(d, c.cnot.n_pi >= 2 && c.cnot.n_pi % 2 == 0, "analysis.cnot.n_pi", "must be even and >= 2");
  check(d, c.cnot.tau_us > 0.0, "analysis.cnot.tau_us", "must be positive");

  check(d, !c.output.directory.empty(), "output.directory", "must not be empty");
  return d;
}

// -- serialization -----------------------------------------------------------------

inline nlohmann::json to_json(const SequenceBlock& s) {
  nlohmann::json j = {{"n_pi", s.n_pi},
                      {"tau_n_us", s.tau_n_us},
                      {"target_angle_rad", s.target_angle_rad},
                      {"rabi_hz", nullptr},
                      {"phi_initial_rad", s.phi_initial_rad},
                      {"final_phase_rule", s.final_phase == FinalPhaseRule::half_step ? "half_step" : "full_step"}};
  if (s.rabi_hz) j["rabi_hz"] = *s.rabi_hz;
  return j;
}

/// Complete document: reading it back gives the same configuration.
inline nlohmann::json to_json(const CampaignConfig& c) {
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : c.census.sequences) seqs.push_back(to_json(s));
  nlohmann::json formats = nlohmann::json::array();
  if (c.output.csv) formats.push_back("csv");
  if (c.output.json) formats.push_back("json");
  const auto& co = c.coherence;
  return {
      {"master_seed", c.master_seed},
      {"threads", c.threads},
      {"b0_tesla", c.b0_tesla},
      {"lattice",
       {{"volume_nm3", c.lattice.volume_nm3},
        {"concentration", c.lattice.concentration},
        {"concentrations", c.lattice.concentrations}}},
      {"sequence", to_json(c.sequence)},
      {"analysis",
       {{"spectrum",
         {{"margin_hz", c.spectrum.margin_hz}, {"step_hz", c.spectrum.step_hz}, {"bath_radius_nm", c.spectrum.bath_radius_nm},
          {"window_hz", c.spectrum.window_hz}}},
        {"map",
         {{"species", to_string(c.map.species)},
          {"r_min_nm", c.map.r_min_nm},
          {"r_max_nm", c.map.r_max_nm},
          {"r_points", c.map.r_points},
          {"theta_points", c.map.theta_points}}},
        {"census",
         {{"realizations", c.census.realizations},
          {"sequences", seqs},
          {"contrast_threshold", c.census.contrast_threshold},
          {"delta_f_scale", c.census.delta_f_scale},
          {"prune_contrast", c.census.prune_contrast}}},
        {"coherence",
         {{"n_pi", co.n_pi},
          {"t_max_ms", co.t_max_ms},
          {"points", co.points},
          {"bath_radius_nm", co.bath_radius_nm},
          {"distributions", co.distributions},
          {"bath_states", co.bath_states},
          {"cce_order", co.cce_order},
          {"pair_cutoff_nm", co.pair_cutoff_nm},
          {"strong_coupling_hz", co.strong_coupling_hz},
          {"averaging", co.averaging == StateAveraging::per_cluster ? "per_cluster" : "per_state"}}},
        {"cnot",
         {{"n_pi", c.cnot.n_pi},
          {"tau_us", c.cnot.tau_us},
          {"couplings_file", c.cnot.couplings_file},
          {"snap_tau", c.cnot.snap_tau}}}}},
      {"output", {{"directory", c.output.directory}, {"formats", formats}}}};
}

/// Accepts either a bare config or a run manifest (uses its "config" member).
inline CampaignConfig parse_config(const nlohmann::json& doc, Diagnostics* warnings = nullptr) {
  const bool is_manifest = doc.is_object() && doc.contains("manifest_version");
  const nlohmann::json& j = is_manifest ? doc.at("config") : doc;
  CampaignConfig cfg;
  Diagnostics d = read_config(j, cfg);
  Diagnostics v = validate(cfg);
  d.insert(d.end(), v.begin(), v.end());
  if (has_errors(d)) throw ConfigError(d);
  if (warnings) *warnings = d;
  return cfg;
}

}  // namespace qmn
