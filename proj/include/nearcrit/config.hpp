#pragma once

// Run configuration: a JSON document with fixed sections. Unknown keys are
// rejected at every level; every value is range-checked before any
// computation starts. See README for the schema.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nearcrit/core.hpp"

namespace nearcrit {

using json = nlohmann::json;

/// Thrown for malformed or out-of-range configuration; maps to exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorClass::invalid_argument, "ConfigError", what) {}
};

struct SigmaProfileConfig {
  std::string kind = "power";  // power | log_decay
  double exponent = 0.5;
  double kappa = 1.0;
  double scale = 1.0;
};

struct ModelConfig {
  std::string family = "lamperti";  // lamperti | counterexample | custom
  std::vector<std::vector<double>> matrix{{1.0}};
  bool normalize = true;
  double theta = 0.5;
  SigmaProfileConfig sigma_profile;
  double transverse = 0.5;
  std::vector<std::string> g;  // custom
  std::string sigma;           // custom
};

struct NormConfig {
  std::string kind = "weighted";  // weighted | l1
  std::optional<double> epsilon;
};

struct LyapunovConfig {
  double alpha = 1.0;
  double beta = -1.0;
  double gamma = 0.0;
  int j = 1;
  double s = 100.0;
  std::string mode = "lemma2";
};

struct CertifyConfig {
  std::vector<double> alphas{1.0, 10.0, 100.0};
  std::vector<double> thresholds{1e2, 1e3};
  int n_probes = 20;
  double probe_span = 1.5;
  std::vector<double> offsets{0.0};
  long n_samples = 100000;
  double shift = 0.0;  // probe states are moved by shift * r
};

struct SamplerConfig {
  double span = 1e4;
  int levels = 40;
  int per_level = 24;
  double overshoot = 1.5;
  bool vertex_rays = true;
};

struct ConditionsConfig {
  double epsilon = 0.4;
  double a = 10.0;
  double b = 1.0;
  double kappa = 1.0;
  std::vector<double> t_grid;  // A3; empty selects 10^1 .. 10^12
  std::vector<double> u_grid{1.0, 10.0, 100.0, 1e3, 1e4};
  int per_slab = 200;
  long a1_samples = 10000;
  int a1_states = 10;
  SamplerConfig sampler;
};

struct SimulateConfig {
  std::vector<double> x0;  // empty: x0_scale * r
  double x0_scale = 100.0;
  double s = 10.0;
  double K = 1e4;
  std::uint64_t n_max = 1000000;
  long n_traj = 500;
  bool keep_series = false;
  bool check_transverse_bound = false;
};

struct CounterexampleConfig {
  double theta = 0.75;
  std::uint64_t structure_steps = 100000;
  std::vector<double> t_probes{1e2, 1e4, 1e6};
  long tau_samples = 100000;
  double x0_scale = 25.0;
  double s = 10.0;
  double K = 1e4;
  std::uint64_t n_max = 1000000;
  long n_traj = 500;
  double band_epsilon = 0.4;
};

struct OutputConfig {
  std::string dir;
  std::string format = "json";  // json | csv | both
};

struct RunConfig {
  ModelConfig model;
  NormConfig norm;
  LyapunovConfig lyapunov;
  CertifyConfig certify;
  ConditionsConfig conditions;
  SimulateConfig simulate;
  CounterexampleConfig counterexample;
  OutputConfig output;
  std::uint64_t seed = 1;
  json source = json::object();  // the document as given, after overrides
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + where + "." + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline void read_opt(const json& j, const std::string& where, const char* key, std::optional<double>& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  double v = 0.0;
  read(j, where, key, v);
  out = v;
}

inline void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ConfigError(field + " " + rule);
}

inline void validate(const RunConfig& c) {
  const auto& m = c.model;
  require(m.family == "lamperti" || m.family == "counterexample" || m.family == "custom", "model.family",
          "must be lamperti, counterexample or custom");
  require(!m.matrix.empty(), "model.matrix", "must be a non-empty square array");
  for (const auto& row : m.matrix) {
    require(row.size() == m.matrix.size(), "model.matrix", "must be square");
    for (double v : row) require(v >= 0.0 && std::isfinite(v), "model.matrix", "entries must be finite and >= 0");
  }
  require(m.theta >= 0.0, "model.theta", "must be >= 0");
  require(m.transverse >= 0.0, "model.transverse", "must be >= 0");
  require(m.sigma_profile.kind == "power" || m.sigma_profile.kind == "log_decay", "model.sigma_profile.kind",
          "must be power or log_decay");
  require(m.sigma_profile.scale > 0.0, "model.sigma_profile.scale", "must be > 0");
  require(m.sigma_profile.kappa > 0.0, "model.sigma_profile.kappa", "must be > 0");
  if (m.family == "custom") {
    require(!m.g.empty(), "model.g", "is required for the custom family");
    require(!m.sigma.empty(), "model.sigma", "is required for the custom family");
  }

  require(c.norm.kind == "weighted" || c.norm.kind == "l1", "norm.kind", "must be weighted or l1");
  if (c.norm.epsilon) require(*c.norm.epsilon > 0.0, "norm.epsilon", "must be > 0");

  const auto& l = c.lyapunov;
  require(l.alpha > 0.0, "lyapunov.alpha", "must be > 0");
  require(l.beta == -1.0 || l.beta > 0.0, "lyapunov.beta", "must be -1 or > 0");
  require(l.gamma >= 0.0, "lyapunov.gamma", "must be >= 0");
  require(l.j >= 1, "lyapunov.j", "must be >= 1");
  require(l.s > std::exp(1.0), "lyapunov.s", "must exceed e");
  require(l.mode == "lemma2" || l.mode == "lemma4", "lyapunov.mode", "must be lemma2 or lemma4");

  const auto& ct = c.certify;
  require(!ct.alphas.empty(), "certify.alphas", "must be non-empty");
  for (double a : ct.alphas) require(a > 0.0, "certify.alphas", "entries must be > 0");
  for (double s : ct.thresholds) require(s > std::exp(1.0), "certify.thresholds", "entries must exceed e");
  require(ct.n_probes >= 1, "certify.n_probes", "must be >= 1");
  require(ct.probe_span >= 1.0, "certify.probe_span", "must be >= 1");
  for (double o : ct.offsets) require(std::abs(o) <= 1.0, "certify.offsets", "entries must lie in [-1, 1]");
  require(ct.n_samples >= 1000, "certify.n_samples", "must be >= 1000");
  require(ct.shift >= 0.0, "certify.shift", "must be >= 0");

  const auto& cd = c.conditions;
  require(cd.epsilon > 0.0 && cd.epsilon < 1.0, "conditions.epsilon", "must lie in (0, 1)");
  require(cd.a > 0.0, "conditions.a", "must be > 0");
  require(cd.b > 0.0, "conditions.b", "must be > 0");
  require(cd.kappa > 0.0, "conditions.kappa", "must be > 0");
  for (double u : cd.u_grid) require(u > 0.0, "conditions.u_grid", "entries must be > 0");
  require(cd.per_slab >= 1, "conditions.per_slab", "must be >= 1");
  require(cd.a1_samples >= 1000, "conditions.a1_samples", "must be >= 1000");
  require(cd.a1_states >= 1, "conditions.a1_states", "must be >= 1");
  require(cd.sampler.span >= 1.0, "conditions.sampler.span", "must be >= 1");
  require(cd.sampler.levels >= 1, "conditions.sampler.levels", "must be >= 1");
  require(cd.sampler.per_level >= 1, "conditions.sampler.per_level", "must be >= 1");
  require(cd.sampler.overshoot > 0.0, "conditions.sampler.overshoot", "must be > 0");

  const auto& sm = c.simulate;
  require(sm.s < sm.K, "simulate.s", "must be < simulate.K");
  require(sm.n_max >= 1, "simulate.n_max", "must be >= 1");
  require(sm.n_traj >= 100, "simulate.n_traj", "must be >= 100");
  if (sm.x0.empty()) require(sm.x0_scale > 0.0, "simulate.x0_scale", "must be > 0");

  const auto& cx = c.counterexample;
  require(cx.theta > 0.0, "counterexample.theta", "must be > 0");
  require(cx.structure_steps >= 1, "counterexample.structure_steps", "must be >= 1");
  require(cx.tau_samples >= 2, "counterexample.tau_samples", "must be >= 2");
  for (double t : cx.t_probes) require(t > 0.0, "counterexample.t_probes", "entries must be > 0");
  require(cx.s < cx.x0_scale && cx.x0_scale < cx.K, "counterexample.x0_scale", "must lie strictly between s and K");
  require(cx.n_traj >= 100, "counterexample.n_traj", "must be >= 100");
  require(cx.band_epsilon > 0.0, "counterexample.band_epsilon", "must be > 0");

  require(c.output.format == "json" || c.output.format == "csv" || c.output.format == "both", "output.format",
          "must be json, csv or both");
}

}  // namespace detail

inline RunConfig parse_config(const json& doc) {
  using detail::check_keys;
  using detail::read;
  RunConfig c;
  check_keys(doc, "config",
             {"model", "norm", "lyapunov", "certify", "conditions", "simulate", "counterexample", "output", "seed"});
  read(doc, "config", "seed", c.seed);

  if (doc.contains("model")) {
    const json& j = doc.at("model");
    check_keys(j, "model", {"family", "matrix", "normalize", "theta", "sigma_profile", "transverse", "g", "sigma"});
    auto& m = c.model;
    read(j, "model", "family", m.family);
    read(j, "model", "matrix", m.matrix);
    read(j, "model", "normalize", m.normalize);
    read(j, "model", "theta", m.theta);
    read(j, "model", "transverse", m.transverse);
    if (j.contains("g")) {
      if (j.at("g").is_string()) {
        m.g = {j.at("g").get<std::string>()};
      } else {
        read(j, "model", "g", m.g);
      }
    }
    read(j, "model", "sigma", m.sigma);
    if (j.contains("sigma_profile")) {
      const json& p = j.at("sigma_profile");
      check_keys(p, "model.sigma_profile", {"kind", "exponent", "kappa", "scale"});
      read(p, "model.sigma_profile", "kind", m.sigma_profile.kind);
      read(p, "model.sigma_profile", "exponent", m.sigma_profile.exponent);
      read(p, "model.sigma_profile", "kappa", m.sigma_profile.kappa);
      read(p, "model.sigma_profile", "scale", m.sigma_profile.scale);
    }
  }
  if (doc.contains("norm")) {
    const json& j = doc.at("norm");
    check_keys(j, "norm", {"kind", "epsilon"});
    read(j, "norm", "kind", c.norm.kind);
    detail::read_opt(j, "norm", "epsilon", c.norm.epsilon);
  }
  if (doc.contains("lyapunov")) {
    const json& j = doc.at("lyapunov");
    check_keys(j, "lyapunov", {"alpha", "beta", "gamma", "j", "s", "mode"});
    auto& l = c.lyapunov;
    read(j, "lyapunov", "alpha", l.alpha);
    read(j, "lyapunov", "beta", l.beta);
    read(j, "lyapunov", "gamma", l.gamma);
    read(j, "lyapunov", "j", l.j);
    read(j, "lyapunov", "s", l.s);
    read(j, "lyapunov", "mode", l.mode);
  }
  if (doc.contains("certify")) {
    const json& j = doc.at("certify");
    check_keys(j, "certify", {"alphas", "thresholds", "n_probes", "probe_span", "offsets", "n_samples", "shift"});
    auto& ct = c.certify;
    read(j, "certify", "alphas", ct.alphas);
    read(j, "certify", "thresholds", ct.thresholds);
    read(j, "certify", "n_probes", ct.n_probes);
    read(j, "certify", "probe_span", ct.probe_span);
    read(j, "certify", "offsets", ct.offsets);
    read(j, "certify", "n_samples", ct.n_samples);
    read(j, "certify", "shift", ct.shift);
  }
  if (doc.contains("conditions")) {
    const json& j = doc.at("conditions");
    check_keys(j, "conditions",
               {"epsilon", "a", "b", "kappa", "t_grid", "u_grid", "per_slab", "a1_samples", "a1_states", "sampler"});
    auto& cd = c.conditions;
    read(j, "conditions", "epsilon", cd.epsilon);
    read(j, "conditions", "a", cd.a);
    read(j, "conditions", "b", cd.b);
    read(j, "conditions", "kappa", cd.kappa);
    read(j, "conditions", "t_grid", cd.t_grid);
    read(j, "conditions", "u_grid", cd.u_grid);
    read(j, "conditions", "per_slab", cd.per_slab);
    read(j, "conditions", "a1_samples", cd.a1_samples);
    read(j, "conditions", "a1_states", cd.a1_states);
    if (j.contains("sampler")) {
      const json& s = j.at("sampler");
      check_keys(s, "conditions.sampler", {"span", "levels", "per_level", "overshoot", "vertex_rays"});
      read(s, "conditions.sampler", "span", cd.sampler.span);
      read(s, "conditions.sampler", "levels", cd.sampler.levels);
      read(s, "conditions.sampler", "per_level", cd.sampler.per_level);
      read(s, "conditions.sampler", "overshoot", cd.sampler.overshoot);
      read(s, "conditions.sampler", "vertex_rays", cd.sampler.vertex_rays);
    }
  }
  if (doc.contains("simulate")) {
    const json& j = doc.at("simulate");
    check_keys(j, "simulate", {"x0", "x0_scale", "s", "K", "n_max", "n_traj", "keep_series", "check_transverse_bound"});
    auto& sm = c.simulate;
    read(j, "simulate", "x0", sm.x0);
    read(j, "simulate", "x0_scale", sm.x0_scale);
    read(j, "simulate", "s", sm.s);
    read(j, "simulate", "K", sm.K);
    read(j, "simulate", "n_max", sm.n_max);
    read(j, "simulate", "n_traj", sm.n_traj);
    read(j, "simulate", "keep_series", sm.keep_series);
    read(j, "simulate", "check_transverse_bound", sm.check_transverse_bound);
  }
  if (doc.contains("counterexample")) {
    const json& j = doc.at("counterexample");
    check_keys(j, "counterexample",
               {"theta", "structure_steps", "t_probes", "tau_samples", "x0_scale", "s", "K", "n_max", "n_traj",
                "band_epsilon"});
    auto& cx = c.counterexample;
    read(j, "counterexample", "theta", cx.theta);
    read(j, "counterexample", "structure_steps", cx.structure_steps);
    read(j, "counterexample", "t_probes", cx.t_probes);
    read(j, "counterexample", "tau_samples", cx.tau_samples);
    read(j, "counterexample", "x0_scale", cx.x0_scale);
    read(j, "counterexample", "s", cx.s);
    read(j, "counterexample", "K", cx.K);
    read(j, "counterexample", "n_max", cx.n_max);
    read(j, "counterexample", "n_traj", cx.n_traj);
    read(j, "counterexample", "band_epsilon", cx.band_epsilon);
  }
  if (doc.contains("output")) {
    const json& j = doc.at("output");
    check_keys(j, "output", {"dir", "format"});
    read(j, "output", "dir", c.output.dir);
    read(j, "output", "format", c.output.format);
  }
  detail::validate(c);
  c.source = doc;
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// 64-bit FNV-1a of the canonical dump (sorted keys) of the effective config.
inline std::string config_hash(const RunConfig& c) {
  json doc = c.source;
  doc["seed"] = c.seed;
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace nearcrit
