// qmn: command-line front end for the campaign runner.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qmn/campaign.hpp"
#include "qmn/config.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> realizations;
  std::optional<int> threads;
};

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void print(const qmn::Diagnostics& d) {
  for (const auto& x : d) std::cerr << x.str() << '\n';
}

/// Config file (or manifest), then the figure preset, then flags. Validation
/// runs last and reports every problem at once.
std::optional<qmn::CampaignConfig> load(const Overrides& o, const std::string& figure, bool coherence_run) {
  qmn::CampaignConfig cfg;
  qmn::Diagnostics diag;
  if (!o.config_path.empty()) {
    std::ifstream f(o.config_path);
    if (!f) {
      std::cerr << "error: --config: cannot open " << o.config_path << '\n';
      return std::nullopt;
    }
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      std::cerr << "error: --config: " << e.what() << '\n';
      return std::nullopt;
    }
    const bool manifest = doc.is_object() && doc.contains("manifest_version");
    diag = qmn::read_config(manifest ? doc.at("config") : doc, cfg);
  }
  if (!figure.empty()) qmn::apply_figure(figure, cfg);
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.out) cfg.output.directory = *o.out;
  if (o.threads) cfg.threads = *o.threads;
  if (o.realizations) {
    cfg.census.realizations = *o.realizations;
    if (coherence_run) cfg.coherence.distributions = *o.realizations;
  }
  const auto v = qmn::validate(cfg);
  diag.insert(diag.end(), v.begin(), v.end());
  print(diag);
  if (qmn::has_errors(diag)) return std::nullopt;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum memory node simulator: nuclear-spin registers around V_Si in 4H-SiC"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config_path, "JSON config or a previous run's manifest.json")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--realizations", o.realizations, "census realizations (bath distributions for coherence runs)");
  app.add_option("--threads", o.threads, "worker threads, 0 = all cores");

  const std::vector<std::pair<std::string, std::string>> plain = {
      {"lattice", "sample one isotope placement and report lattice statistics"},
      {"spectrum", "bath contrast versus rf drive frequency"},
      {"map", "single-spin contrast versus position"},
      {"census", "accessible-qubit statistics across the concentration sweep"},
      {"coherence", "CCE coherence curve and T2 fit at one concentration"},
      {"cnot", "pairwise CNOT fidelities of a nuclear register"}};
  for (const auto& [name, help] : plain) app.add_subcommand(name, help);

  std::string figure;
  auto* reproduce = app.add_subcommand("reproduce", "canned figure setups");
  reproduce->add_option("figure", figure, "figure id")->required()->check(CLI::IsMember(qmn::figure_ids()));

  auto* validate = app.add_subcommand("validate", "check a config and print diagnostics");

  CLI11_PARSE(app, argc, argv);

  const std::string sub = app.get_subcommands().front()->get_name();
  const bool coherence_run = sub == "coherence" || (sub == "reproduce" && figure == "S9b");
  const auto cfg = load(o, sub == "reproduce" ? figure : "", coherence_run);
  if (!cfg) return kExitConfig;

  if (app.got_subcommand(validate)) {
    std::cout << "ok\n";
    return 0;
  }

  try {
    qmn::RunContext ctx(*cfg, sub, sub == "reproduce" ? figure : "");
    qmn::run(ctx);
    std::cout << ctx.cfg.output.directory << ":";
    for (const auto& f : ctx.outputs) std::cout << ' ' << f;
    std::cout << " manifest.json\n";
  } catch (const qmn::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
