#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "qmn/campaign.hpp"
#include "qmn/config.hpp"

using namespace qmn;

namespace {

bool mentions(const Diagnostics& d, const std::string& field, Diagnostic::Severity sev = Diagnostic::Severity::error) {
  for (const auto& x : d)
    if (x.field == field && x.severity == sev) return true;
  return false;
}

Diagnostics read_and_validate(const nlohmann::json& j) {
  CampaignConfig c;
  Diagnostics d = read_config(j, c);
  const Diagnostics v = validate(c);
  d.insert(d.end(), v.begin(), v.end());
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qmn_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  EXPECT_FALSE(has_errors(validate(CampaignConfig{})));
  EXPECT_NO_THROW(parse_config(nlohmann::json::object()));
}

TEST(Config, ErrorsNameTheField) {
  const auto d = read_and_validate(
      {{"sequence", {{"tau_n_us", -1.0}}}, {"analysis", {{"census", {{"realizations", 0}}}, {"cnot", {{"n_pi", 31}}}}}});
  EXPECT_TRUE(mentions(d, "sequence.tau_n_us"));
  EXPECT_TRUE(mentions(d, "analysis.census.realizations"));
  EXPECT_TRUE(mentions(d, "analysis.cnot.n_pi"));
}

TEST(Config, UnknownAndMistypedKeys) {
  const auto d = read_and_validate({{"sequence", {{"bogus", 1}, {"n_pi", "many"}}}, {"lattise", {}}});
  EXPECT_TRUE(mentions(d, "sequence.bogus"));
  EXPECT_TRUE(mentions(d, "sequence.n_pi"));
  EXPECT_TRUE(mentions(d, "lattise"));
  const auto neg = read_and_validate({{"analysis", {{"census", {{"realizations", -5}}}}}});
  EXPECT_TRUE(mentions(neg, "analysis.census.realizations"));
}

TEST(Config, ParseThrowsWithAllErrors) {
  try {
    parse_config({{"b0_tesla", 0.0}, {"threads", -1}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e.diagnostics, "b0_tesla"));
    EXPECT_TRUE(mentions(e.diagnostics, "threads"));
  }
}

TEST(Config, RotatingWaveWarning) {
  Diagnostics w;
  const auto c = parse_config({{"sequence", {{"rabi_hz", 5e4}}}}, &w);
  EXPECT_TRUE(mentions(w, "sequence.rabi_hz", Diagnostic::Severity::warning));
  EXPECT_FALSE(has_errors(w));
  EXPECT_DOUBLE_EQ(c.sequence.rabi(), 5e4);
  Diagnostics quiet;
  parse_config(nlohmann::json::object(), &quiet);
  EXPECT_TRUE(quiet.empty());
}

TEST(Config, SequenceAngleAndRabiAgree) {
  SequenceBlock s;
  EXPECT_NEAR(s.theta(), std::numbers::pi, 1e-12);
  s.rabi_hz = s.rabi();
  EXPECT_NEAR(s.theta(), std::numbers::pi, 1e-12);
}

TEST(Config, JsonRoundTrip) {
  CampaignConfig c;
  c.master_seed = 0xFFFFFFFFFFFFFFF0ULL;
  c.threads = 3;
  c.sequence.rabi_hz = 12.5;
  c.sequence.final_phase = FinalPhaseRule::full_step;
  SequenceBlock shorter;
  shorter.n_pi = 20;
  shorter.tau_n_us = 46.0;
  c.census.sequences = {SequenceBlock{}, shorter};
  c.coherence.averaging = StateAveraging::per_state;
  c.map.species = Species::Si29;
  c.output.json = false;
  const nlohmann::json j = to_json(c);
  const CampaignConfig back = parse_config(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.master_seed, c.master_seed);
  EXPECT_EQ(back.census.sequences.at(1).n_pi, 20);
  EXPECT_FALSE(back.output.json);
}

TEST(Config, ManifestIsAcceptedAsConfig) {
  CampaignConfig c;
  c.master_seed = 77;
  const nlohmann::json manifest = {{"manifest_version", 1}, {"config", to_json(c)}, {"outputs", nlohmann::json::array()}};
  EXPECT_EQ(parse_config(manifest).master_seed, 77u);
}

TEST(Config, FigurePresets) {
  for (const auto& f : figure_ids()) {
    CampaignConfig c;
    apply_figure(f, c);
    EXPECT_FALSE(has_errors(validate(c))) << f;
  }
  CampaignConfig c;
  EXPECT_THROW(apply_figure("fig9z", c), std::invalid_argument);
}

TEST(Campaign, FormatDoubleRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0}) EXPECT_EQ(std::stod(format_double(x)), x);
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(format_double(-INFINITY), "-inf");
}

TEST(Campaign, OutputsAreIndependentOfThreadCount) {
  CampaignConfig c;
  c.lattice.concentrations = {0.01, 0.03};
  c.census.realizations = 6;
  c.map.r_points = 4;
  c.map.theta_points = 3;
  for (const std::string sub : {"census", "map", "lattice"}) {
    std::string files[2];
    for (int k = 0; k < 2; ++k) {
      CampaignConfig ck = c;
      ck.threads = k == 0 ? 1 : 4;
      ck.output.directory = scratch(sub + std::to_string(k)).string();
      RunContext ctx(ck, sub);
      run(ctx);
      ASSERT_FALSE(ctx.outputs.empty());
      for (const auto& o : ctx.outputs) files[k] += o + "\n" + slurp(ctx.dir() / o);
      EXPECT_TRUE(fs::exists(ctx.dir() / "manifest.json"));
    }
    EXPECT_EQ(files[0], files[1]) << sub;
  }
}

TEST(Campaign, ManifestReproducesRun) {
  CampaignConfig c;
  c.lattice.concentrations = {0.02};
  c.census.realizations = 3;
  c.output.directory = scratch("manifest_a").string();
  RunContext a(c, "census");
  run(a);
  std::ifstream mf(a.dir() / "manifest.json");
  const nlohmann::json m = nlohmann::json::parse(mf);
  EXPECT_EQ(m.at("manifest_version"), 1);
  EXPECT_EQ(m.at("subcommand"), "census");
  EXPECT_EQ(m.at("outputs").size(), a.outputs.size());
  CampaignConfig again = parse_config(m);
  again.output.directory = scratch("manifest_b").string();
  RunContext b(again, "census");
  run(b);
  EXPECT_EQ(slurp(a.dir() / "census.csv"), slurp(b.dir() / "census.csv"));
}

TEST(Campaign, RunRejectsInvalidConfig) {
  CampaignConfig c;
  c.census.realizations = 0;
  c.output.directory = scratch("invalid").string();
  RunContext ctx(c, "census");
  EXPECT_THROW(run(ctx), ConfigError);
  EXPECT_FALSE(fs::exists(ctx.dir() / "manifest.json"));
  RunContext bad(CampaignConfig{}, "frobnicate");
  EXPECT_THROW(run(bad), std::invalid_argument);
}
