#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nearcrit/commands.hpp"
#include "nearcrit/config.hpp"

using namespace nearcrit;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(NEARCRIT_CLI_PATH) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string config(const std::string& name) { return std::string(NEARCRIT_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nearcrit_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Cli, AnalyzeCounterexampleMatrix) {
  const RunResult r = run_cli("analyze --config " + config("analyze_counterexample.json"));
  ASSERT_EQ(r.code, 0);
  const json doc = json::parse(r.out);
  EXPECT_EQ(doc["command"], "analyze");
  const json& res = doc["result"];
  EXPECT_NEAR(res["spectral"]["eig"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(res["spectral"]["rho"].get<double>(), 0.0, 1e-12);
  EXPECT_NEAR(res["cone_constant"]["l1"]["lambda"].get<double>(), 2.0, 1e-12);
  EXPECT_GE(res["cone_constant"]["l1"]["attaining_vertex"].get<int>(), 1);
  EXPECT_EQ(res["spectral"]["r"].size(), 2u);
  EXPECT_TRUE(doc.contains("config_hash"));
  EXPECT_TRUE(doc.contains("generated_at"));
}

TEST(Cli, AnalyzeScalarIsNormalized) {
  const RunResult r = run_cli("analyze --config " + config("analyze_scalar.json"));
  ASSERT_EQ(r.code, 0);
  const json res = json::parse(r.out)["result"];
  // eig is the Perron root of the input matrix; M is the normalized one
  EXPECT_NEAR(res["spectral"]["eig"].get<double>(), 2.5, 1e-15);
  EXPECT_NEAR(res["spectral"]["M"][0][0].get<double>(), 1.0, 1e-15);
  EXPECT_EQ(res["spectral"]["rho"].get<double>(), 0.0);
  EXPECT_EQ(res["norm_basis"]["rho_certified"].get<double>(), 0.0);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("analyze --config " + config("permutation.json")).code, 3);
  EXPECT_EQ(run_cli("analyze --config " + config("invalid_unknown_key.json")).code, 2);
  EXPECT_EQ(run_cli("analyze --config /nonexistent/config.json").code, 2);
  EXPECT_EQ(run_cli("analyze --config " + config("analyze_scalar.json") + " --format xml").code, 2);
  EXPECT_EQ(run_cli("frobnicate --config " + config("analyze_scalar.json")).code, 2);
  EXPECT_EQ(run_cli("").code, 2);
}

TEST(Cli, CheckReportsAllConditions) {
  const RunResult r = run_cli("check --config " + config("check.json"));
  ASSERT_EQ(r.code, 0);
  const json res = json::parse(r.out)["result"];
  ASSERT_EQ(res["reports"].size(), 5u);
  std::set<std::string> ids;
  for (const auto& rep : res["reports"]) ids.insert(rep["condition_id"].get<std::string>());
  EXPECT_EQ(ids, (std::set<std::string>{"thm1_drift", "thm2_drift", "A1", "A3", "A2_remark1"}));
  // theta = 0.5 with eps = 0.4: recurrent side holds, transient side fails
  EXPECT_EQ(res["reports"][0]["verdict"], "holds_on_sample");
  EXPECT_EQ(res["reports"][1]["verdict"], "violated");
}

TEST(Cli, CertifyProducesSweep) {
  const RunResult r = run_cli("certify --config " + config("lamperti_certify.json") + " --workers 2");
  ASSERT_EQ(r.code, 0);
  const json res = json::parse(r.out)["result"];
  ASSERT_EQ(res["sweep"].size(), 2u);
  EXPECT_EQ(res["sweep"][0]["estimates"].size(), 4u);
  EXPECT_EQ(res["mode"], "lemma2");
}

TEST(Cli, CounterexampleStructureIsClean) {
  const RunResult r = run_cli("counterexample --config " + config("counterexample.json"));
  ASSERT_EQ(r.code, 0);
  const json res = json::parse(r.out)["result"];
  EXPECT_TRUE(res["structure"]["ok"].get<bool>());
  EXPECT_EQ(res["band_condition_b1"]["verdict"], "holds_on_sample");
  EXPECT_EQ(res["band_condition_b2"]["verdict"], "violated");
  EXPECT_EQ(res["embedded_chain_stats"].size(), 2u);
}

TEST(Cli, OutputsAreReproducible) {
  const fs::path a = scratch("a"), b = scratch("b");
  const std::string base = "simulate --config " + config("lamperti_simulate.json");
  ASSERT_EQ(run_cli(base + " --out " + a.string()).code, 0);
  ASSERT_EQ(run_cli(base + " --out " + b.string() + " --workers 3").code, 0);
  for (const char* f : {"simulate_records.csv", "simulate_series.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  json ja = json::parse(slurp(a / "simulate.json")), jb = json::parse(slurp(b / "simulate.json"));
  ja.erase("generated_at");
  jb.erase("generated_at");
  EXPECT_EQ(ja.dump(), jb.dump());
  EXPECT_EQ(ja["result"]["transverse_bound_violations"].get<long>(), 0);
  EXPECT_GT(ja["result"]["summary"]["escape_fraction"].get<double>(), 0.9);

  const std::string first_line = slurp(a / "simulate_records.csv").substr(0, 200);
  EXPECT_NE(first_line.find("config_hash=" + ja["config_hash"].get<std::string>()), std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, SeedOverrideChangesHash) {
  const RunResult a = run_cli("analyze --config " + config("analyze_scalar.json"));
  const RunResult b = run_cli("analyze --config " + config("analyze_scalar.json") + " --seed 99");
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  const json ja = json::parse(a.out), jb = json::parse(b.out);
  EXPECT_EQ(jb["seed"].get<std::uint64_t>(), 99u);
  EXPECT_NE(ja["config_hash"], jb["config_hash"]);
}

TEST(Config, DefaultsAndOverrides) {
  const RunConfig c = parse_config_text(R"({"model": {"matrix": [[1, 2], [3, 4]], "theta": 2}, "seed": 4})");
  EXPECT_EQ(c.model.family, "lamperti");
  EXPECT_EQ(c.model.theta, 2.0);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.simulate.n_traj, 500);
  EXPECT_EQ(c.counterexample.x0_scale, 25.0);
  const RunConfig g = parse_config_text(R"j({"model": {"family": "custom", "g": "1", "sigma": "sqrt(lx)"}})j");
  EXPECT_EQ(g.model.g, std::vector<std::string>{"1"});
}

TEST(Config, ErrorsNameTheField) {
  auto message = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(R"({"simulate": {"n_trajs": 5}})").find("simulate.n_trajs"), std::string::npos);
  EXPECT_NE(message(R"({"conditions": {"sampler": {"level": 5}}})").find("conditions.sampler.level"),
            std::string::npos);
  EXPECT_NE(message(R"({"model": {"theta": "big"}})").find("model.theta"), std::string::npos);
  EXPECT_NE(message(R"({"lyapunov": {"s": 2}})").find("lyapunov.s"), std::string::npos);
  EXPECT_NE(message(R"({"simulate": {"n_traj": 10}})").find("simulate.n_traj"), std::string::npos);
  EXPECT_NE(message(R"({"model": {"matrix": [[1, 2]]}})").find("model.matrix"), std::string::npos);
  EXPECT_NE(message(R"({"model": {"family": "custom"}})").find("model.g"), std::string::npos);
  EXPECT_NE(message("{not json").find("JSON"), std::string::npos);
  EXPECT_THROW(load_config("/nonexistent.json"), ConfigError);
}

TEST(Config, HashIgnoresKeyOrderButNotValues) {
  const RunConfig a = parse_config_text(R"({"seed": 1, "model": {"theta": 1, "matrix": [[1]]}})");
  const RunConfig b = parse_config_text(R"({"model": {"matrix": [[1]], "theta": 1}, "seed": 1})");
  const RunConfig c = parse_config_text(R"({"model": {"matrix": [[1]], "theta": 2}, "seed": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Commands, EnvelopeAndCsvPreamble) {
  const RunConfig c = parse_config_text(R"({"model": {"matrix": [[1, 1], [1, 0]]}, "seed": 3})");
  const CommandOutput out = run_command("analyze", c);
  const json env = envelope(out, c, "2000-01-01T00:00:00Z");
  EXPECT_EQ(env["seed"].get<std::uint64_t>(), 3u);
  EXPECT_EQ(env["generated_at"], "2000-01-01T00:00:00Z");
  ASSERT_EQ(out.tables.size(), 1u);
  const std::string csv = out.tables[0].second.render("hello");
  EXPECT_EQ(csv.rfind("# hello\nquantity,value\n", 0), 0u);
  EXPECT_THROW(run_command("nope", c), ConfigError);
}
