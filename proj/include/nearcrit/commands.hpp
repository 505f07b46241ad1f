#pragma once

// The CLI's subcommands as library calls: each turns a validated RunConfig
// into a JSON report plus optional CSV tables.

#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nearcrit/conditions.hpp"
#include "nearcrit/config.hpp"
#include "nearcrit/counterexample.hpp"
#include "nearcrit/geometry.hpp"
#include "nearcrit/lyapunov.hpp"
#include "nearcrit/model.hpp"
#include "nearcrit/report.hpp"
#include "nearcrit/simulate.hpp"
#include "nearcrit/spectral.hpp"

namespace nearcrit {

struct CommandOutput {
  std::string command;
  json result = json::object();
  std::vector<std::pair<std::string, CsvTable>> tables;  // file stem, table
  int exit_code = 0;
};

// ---------------------------------------------------------------------------
// Building blocks from the config
// ---------------------------------------------------------------------------

inline Matrix config_matrix(const ModelConfig& m) {
  const auto d = static_cast<Eigen::Index>(m.matrix.size());
  Matrix M(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) M(i, j) = m.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return M;
}

inline SpectralData config_spectral(const RunConfig& c) {
  if (c.model.family == "counterexample") return perron_decompose(counterexample_matrix());
  const Matrix M = config_matrix(c.model);
  if (c.model.normalize) return normalize_to_critical(M).second;
  SpectralData sd = perron_decompose(M);
  if (!is_critical(sd)) {
    throw InvalidArgument("model.matrix has Perron root " + std::to_string(sd.eig) +
                          "; set model.normalize = true or supply a critical matrix");
  }
  return sd;
}

inline ModelSpec config_model(const RunConfig& c, const SpectralData& sd) {
  const auto& m = c.model;
  if (m.family == "counterexample") return make_counterexample_model(CounterexampleParams::defaults(m.theta));
  if (m.family == "custom") return make_custom_model(sd, m.g, m.sigma, m.transverse);
  const SigmaProfile profile = m.sigma_profile.kind == "power"
                                   ? SigmaProfile::power(m.sigma_profile.exponent, m.sigma_profile.scale)
                                   : SigmaProfile::log_decay(m.sigma_profile.kappa, m.sigma_profile.scale);
  return make_lamperti_model(sd, m.theta, profile, m.transverse);
}

inline Norm config_norm(const RunConfig& c, const SpectralData& sd) {
  if (c.norm.kind == "l1") return Norm::l1();
  return Norm::weighted(build_contraction_norm(sd, c.norm.epsilon));
}

inline LyapunovParams config_lyapunov(const RunConfig& c, const SpectralData& sd, const Norm& norm) {
  LyapunovParams lp;
  lp.alpha = c.lyapunov.alpha;
  lp.beta = c.lyapunov.beta;
  lp.gamma = c.lyapunov.gamma;
  lp.j = c.lyapunov.j;
  lp.s = c.lyapunov.s;
  lp.norm = norm;
  validate(lp, sd, norm.induced(sd.M - sd.rank_one()));
  return lp;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline CommandOutput cmd_analyze(const RunConfig& c) {
  CommandOutput out;
  out.command = "analyze";
  const SpectralData sd = config_spectral(c);
  const NormBasis nb = build_contraction_norm(sd, c.norm.epsilon);
  const Norm weighted = Norm::weighted(nb);
  const Norm l1 = Norm::l1();
  Rng rng(c.seed);
  const NormEquivalence eq = norm_equivalence(weighted, sd.dim(), rng);
  out.result = {{"spectral", to_json(sd)},
                {"norm_basis", to_json(nb)},
                {"cone_constant", {{"weighted", to_json(cone_constant(sd, weighted))}, {"l1", to_json(cone_constant(sd, l1))}}},
                {"norm_equivalence",
                 {{"lower", eq.lower}, {"upper", eq.upper}, {"sampled_lower", eq.sampled_lower}}}};
  CsvTable t({"quantity", "value"});
  t.row().cell("eig").cell(sd.eig);
  t.row().cell("rho").cell(sd.rho);
  t.row().cell("rho_certified").cell(nb.rho_certified);
  t.row().cell("lambda_weighted").cell(cone_constant(sd, weighted).lambda);
  t.row().cell("lambda_l1").cell(cone_constant(sd, l1).lambda);
  t.row().cell("condition_number").cell(nb.condition_number);
  out.tables.emplace_back("analyze", std::move(t));
  return out;
}

inline CommandOutput cmd_check(const RunConfig& c) {
  CommandOutput out;
  out.command = "check";
  const SpectralData sd = config_spectral(c);
  const ModelSpec model = config_model(c, sd);
  const Norm norm = config_norm(c, sd);
  const auto& cd = c.conditions;

  SamplerSpec sampler;
  sampler.a = cd.a;
  sampler.span = cd.sampler.span;
  sampler.levels = cd.sampler.levels;
  sampler.per_level = cd.sampler.per_level;
  sampler.overshoot = cd.sampler.overshoot;
  sampler.vertex_rays = cd.sampler.vertex_rays;
  sampler.seed = c.seed;

  std::vector<ConditionReport> reports;
  reports.push_back(check_theorem1_condition(model, norm, cd.epsilon, cd.b, cd.a, sampler));
  reports.push_back(check_theorem2_condition(model, norm, cd.epsilon, cd.b, cd.a, sampler));
  const auto a1_states = probe_states(sd, log_grid(cd.a, cd.a * cd.sampler.span, cd.a1_states));
  reports.push_back(check_A1(model, a1_states, cd.a1_samples, splitmix64(c.seed + 1)));
  reports.push_back(check_A3(model, cd.kappa, cd.t_grid.empty() ? default_a3_grid() : cd.t_grid));
  reports.push_back(check_A2_remark1(model, cd.u_grid, cd.per_slab, splitmix64(c.seed + 2)));

  json arr = json::array();
  CsvTable t({"condition", "state", "lhs", "rhs"});
  for (const auto& r : reports) {
    arr.push_back(to_json(r));
    for (const auto& v : r.violations) t.row().cell(to_string(r.id)).cell(v.state).cell(v.lhs).cell(v.rhs);
  }
  out.result = {{"norm", norm.name()}, {"reports", arr}};
  out.tables.emplace_back("check_violations", std::move(t));
  return out;
}

inline CommandOutput cmd_certify(const RunConfig& c, unsigned workers = 1) {
  CommandOutput out;
  out.command = "certify";
  const SpectralData sd = config_spectral(c);
  const ModelSpec model = config_model(c, sd);
  const Norm norm = config_norm(c, sd);
  const LyapunovParams base = config_lyapunov(c, sd, norm);

  SweepSpec spec;
  spec.alphas = c.certify.alphas;
  spec.thresholds = c.certify.thresholds;
  spec.n_probes = c.certify.n_probes;
  spec.probe_span = c.certify.probe_span;
  spec.offsets = c.certify.offsets;
  spec.n_samples = c.certify.n_samples;
  spec.shift = c.certify.shift;
  spec.mode = c.lyapunov.mode == "lemma4" ? DriftMode::lemma4 : DriftMode::lemma2;

  const auto sweep = drift_sweep(model, base, spec, c.seed, workers);
  json entries = json::array();
  json certified = nullptr;
  CsvTable t({"alpha", "s", "state", "ell_x", "drift_mean", "drift_se", "remainder", "verdict"});
  for (const auto& e : sweep) {
    json j = to_json(e.report);
    j["alpha"] = e.alpha;
    j["s"] = e.s;
    entries.push_back(j);
    if (certified.is_null() && e.report.all_pass() && !e.report.estimates.empty()) {
      certified = {{"alpha", e.alpha}, {"s", e.s}};
    }
    for (const auto& d : e.report.estimates) {
      t.row().cell(e.alpha).cell(e.s).cell(d.state).cell(ell_dot(sd, d.state)).cell(d.drift_mean).cell(d.drift_se);
      t.cell(d.remainder_term).cell(to_string(d.verdict));
    }
  }
  out.result = {{"norm", norm.name()}, {"mode", to_string(spec.mode)}, {"sweep", entries},
                {"first_all_pass", certified}};
  if (spec.mode == DriftMode::lemma4 && c.model.family == "lamperti" && c.model.sigma_profile.kind == "log_decay") {
    out.result["beta_upper_bound"] = lemma4_beta_bound(c.model.sigma_profile.kappa, model.p - 2.0);
  }
  out.tables.emplace_back("certify", std::move(t));
  return out;
}

inline CommandOutput cmd_simulate(const RunConfig& c, unsigned workers = 1) {
  CommandOutput out;
  out.command = "simulate";
  const SpectralData sd = config_spectral(c);
  const ModelSpec model = config_model(c, sd);
  const auto& sm = c.simulate;
  Vector x0;
  if (sm.x0.empty()) {
    x0 = sm.x0_scale * sd.r;
  } else {
    if (static_cast<Eigen::Index>(sm.x0.size()) != sd.dim()) throw ConfigError("simulate.x0 has the wrong length");
    x0 = Eigen::Map<const Vector>(sm.x0.data(), static_cast<Eigen::Index>(sm.x0.size()));
  }
  TrajectoryOptions opt;
  opt.norm = config_norm(c, sd);
  opt.keep_series = sm.keep_series;
  opt.check_transverse_bound = sm.check_transverse_bound;
  const EnsembleResult res = classify_ensemble(model, x0, sm.s, sm.K, sm.n_max, sm.n_traj, c.seed, opt, workers);

  json records = json::array();
  CsvTable rec({"seed", "outcome", "first_passage", "steps", "final_angle", "half_angle", "bound_violations"});
  CsvTable series({"seed", "n", "ell_x", "check_norm", "angle"});
  long bound_violations = 0;
  for (const auto& r : res.records) {
    records.push_back(to_json(r));
    bound_violations += r.bound_violations;
    rec.row().cell(r.seed).cell(to_string(r.outcome)).cell(r.first_passage ? std::to_string(*r.first_passage) : "");
    rec.cell(r.steps).cell(r.final_angle).cell(r.half_angle).cell(r.bound_violations);
    for (const auto& p : r.series) series.row().cell(r.seed).cell(p.n).cell(p.ell_x).cell(p.check_norm).cell(p.angle);
  }
  out.result = {{"norm", opt.norm->name()}, {"summary", to_json(res.summary)}, {"records", records}};
  if (sm.check_transverse_bound) out.result["transverse_bound_violations"] = bound_violations;
  if (res.summary.escaped > 0) out.result["ray_diagnostic"] = to_json(ray_diagnostic(res.records));
  out.tables.emplace_back("simulate_records", std::move(rec));
  if (sm.keep_series) out.tables.emplace_back("simulate_series", std::move(series));
  return out;
}

inline CommandOutput cmd_counterexample(const RunConfig& c, unsigned workers = 1) {
  CommandOutput out;
  out.command = "counterexample";
  const auto& cx = c.counterexample;
  const CounterexampleParams params = CounterexampleParams::defaults(cx.theta);
  validate_counterexample_params(params);

  const StructureReport structure = verify_counterexample_structure(params, cx.structure_steps, c.seed);
  const auto stats = embedded_chain_stats(params, cx.t_probes, cx.tau_samples, splitmix64(c.seed + 1));
  DichotomySpec spec;
  spec.x0_scale = cx.x0_scale;
  spec.s = cx.s;
  spec.K = cx.K;
  spec.n_max = cx.n_max;
  spec.n_traj = cx.n_traj;
  spec.seed = c.seed;
  spec.workers = workers;
  const DichotomyReport demo = counterexample_dichotomy_demo(params, spec);
  SamplerSpec sampler;
  sampler.seed = c.seed;
  const ConditionReport band1 = counterexample_band_condition(params, cx.band_epsilon, 1.0, sampler);
  const ConditionReport band2 = counterexample_band_condition(params, cx.band_epsilon, 2.0, sampler);

  json st = json::array();
  CsvTable t({"t", "sigma_bar", "tau2_closed", "tau2_mc", "tau2_se", "ratio_mc", "ratio_closed", "mean", "mean_se"});
  for (const auto& p : stats) {
    st.push_back(to_json(p));
    t.row().cell(p.t).cell(p.sigma_bar).cell(p.tau2_closed).cell(p.tau2_mc).cell(p.tau2_se).cell(p.ratio_mc);
    t.cell(p.ratio_closed).cell(p.mean).cell(p.mean_se);
  }
  out.result = {{"structure", to_json(structure)},
                {"embedded_chain_stats", st},
                {"dichotomy", to_json(demo)},
                {"band_condition_b1", to_json(band1)},
                {"band_condition_b2", to_json(band2)}};
  out.tables.emplace_back("counterexample_tau", std::move(t));
  if (!structure.ok()) out.exit_code = 4;
  return out;
}

inline CommandOutput run_command(const std::string& name, const RunConfig& c, unsigned workers = 1) {
  if (name == "analyze") return cmd_analyze(c);
  if (name == "check") return cmd_check(c);
  if (name == "certify") return cmd_certify(c, workers);
  if (name == "simulate") return cmd_simulate(c, workers);
  if (name == "counterexample") return cmd_counterexample(c, workers);
  throw ConfigError("unknown command '" + name + "'");
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// The JSON document written for a command. `generated_at` is the only
/// field that varies between identical runs.
inline json envelope(const CommandOutput& out, const RunConfig& c, const std::string& timestamp) {
  return {{"command", out.command},
          {"config_hash", config_hash(c)},
          {"seed", c.seed},
          {"generated_at", timestamp},
          {"result", out.result}};
}

/// Writes <command>.json and/or one CSV per table into `dir`; returns the paths.
inline std::vector<std::string> write_outputs(const CommandOutput& out, const RunConfig& c, const std::string& dir,
                                              const std::string& format, const std::string& timestamp) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  if (format == "json" || format == "both") {
    const fs::path p = fs::path(dir) / (out.command + ".json");
    std::ofstream(p) << envelope(out, c, timestamp).dump(2) << "\n";
    written.push_back(p.string());
  }
  if (format == "csv" || format == "both") {
    const std::string preamble = "command=" + out.command + " config_hash=" + config_hash(c) +
                                 " seed=" + std::to_string(c.seed);
    for (const auto& [stem, table] : out.tables) {
      const fs::path p = fs::path(dir) / (stem + ".csv");
      std::ofstream(p) << table.render(preamble);
      written.push_back(p.string());
    }
  }
  return written;
}

}  // namespace nearcrit
