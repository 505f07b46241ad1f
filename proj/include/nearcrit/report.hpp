#pragma once

// JSON and CSV renderings of the library's report types.

#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nearcrit/conditions.hpp"
#include "nearcrit/counterexample.hpp"
#include "nearcrit/geometry.hpp"
#include "nearcrit/lyapunov.hpp"
#include "nearcrit/model.hpp"
#include "nearcrit/simulate.hpp"
#include "nearcrit/spectral.hpp"

namespace nearcrit {

using json = nlohmann::json;

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

inline json to_json(const SpectralData& sd) {
  const PerronResiduals res = perron_residuals(sd);
  return {{"dim", sd.dim()},
          {"M", to_json(sd.M)},
          {"ell", to_json(Vector(sd.ell.transpose()))},
          {"r", to_json(sd.r)},
          {"eig", sd.eig},
          {"primitivity_power", sd.primitivity_power},
          {"rho", sd.rho},
          {"residuals",
           {{"left", res.left}, {"right", res.right}, {"pairing", res.pairing}, {"idempotence", res.idempotence}}}};
}

inline json to_json(const NormBasis& nb) {
  return {{"W", to_json(nb.W)},
          {"rho_certified", nb.rho_certified},
          {"epsilon_used", nb.epsilon_used},
          {"spectral_radius", nb.spectral_radius},
          {"scaling", nb.scaling},
          {"condition_number", nb.condition_number}};
}

inline json to_json(const ConeConstant& cc) { return {{"lambda", cc.lambda}, {"attaining_vertex", cc.attaining_vertex + 1}}; }

inline json to_json(const DriftEstimate& e) {
  return {{"state", to_json(e.state)},          {"n_samples", e.n_samples},
          {"drift_mean", e.drift_mean},         {"drift_se", e.drift_se},
          {"remainder_term", e.remainder_term}, {"verdict", to_string(e.verdict)}};
}

inline json to_json(const CertificationReport& r) {
  json est = json::array();
  for (const auto& e : r.estimates) est.push_back(to_json(e));
  return {{"mode", to_string(r.mode)},       {"pass_fraction", r.pass_fraction}, {"passed", r.passed},
          {"failed", r.failed},              {"inconclusive", r.inconclusive},   {"worst_index", r.worst_index},
          {"all_pass", r.all_pass()},        {"estimates", est}};
}

inline json to_json(const ConditionReport& r) {
  json params = json::object();
  for (const auto& [k, v] : r.parameters) params[k] = v;
  json viol = json::array();
  for (const auto& v : r.violations) viol.push_back({{"state", to_json(v.state)}, {"lhs", v.lhs}, {"rhs", v.rhs}});
  json out = {{"condition_id", to_string(r.id)},
              {"parameters", params},
              {"tested_states", r.tested_states},
              {"premise_states", r.premise_states},
              {"violation_count", r.violations.size()},
              {"violations", viol},
              {"verdict", r.verdict()},
              {"coverage_inconclusive", r.coverage_inconclusive}};
  if (!r.series.empty()) out["series"] = r.series;
  if (!r.note.empty()) out["note"] = r.note;
  return out;
}

inline json to_json(const Interval& i) { return json::array({i.lo, i.hi}); }

inline json to_json(const EnsembleSummary& s) {
  return {{"n_traj", s.n_traj},
          {"escaped", s.escaped},
          {"returned", s.returned},
          {"undecided", s.undecided},
          {"escape_fraction", s.escape_fraction},
          {"escape_ci95", to_json(s.escape_ci)},
          {"return_fraction", s.return_fraction},
          {"undecided_fraction", s.undecided_fraction},
          {"median_final_angle", s.median_final_angle}};
}

inline json to_json(const TrajectoryRecord& r) {
  json out = {{"seed", r.seed},
              {"n_max", r.n_max},
              {"stride", r.stride},
              {"outcome", to_string(r.outcome)},
              {"first_passage", r.first_passage ? json(*r.first_passage) : json(nullptr)},
              {"steps", r.steps},
              {"final_angle", r.final_angle},
              {"half_angle", r.half_angle},
              {"final_state", to_json(r.final_state)}};
  if (r.bound_checks > 0) {
    out["bound_checks"] = r.bound_checks;
    out["bound_violations"] = r.bound_violations;
    out["max_bound_excess"] = r.max_bound_excess;
  }
  return out;
}

inline json to_json(const RayDiagnostic& d) {
  return {{"n_escapers", d.n_escapers},
          {"median_final_angle", d.median_final},
          {"p90_final_angle", d.p90_final},
          {"median_half_horizon_angle", d.median_half},
          {"fraction_decreasing", d.fraction_decreasing}};
}

inline json to_json(const StructureReport& r) {
  json viol = json::array();
  for (const auto& v : r.violations) viol.push_back({{"step", v.step}, {"identity", v.identity}, {"detail", v.detail}});
  return {{"n_steps", r.n_steps},
          {"episodes", r.episodes},
          {"absorbed_at", r.absorbed_at},
          {"violations", viol},
          {"cross_check_max_dev", r.cross_check_max_dev},
          {"cross_check_ok", r.cross_check_ok},
          {"ok", r.ok()}};
}

inline json to_json(const EmbeddedChainPoint& p) {
  return {{"t", p.t},
          {"sigma_bar", p.sigma_bar},
          {"tau2_closed", p.tau2_closed},
          {"mean", p.mean},
          {"mean_se", p.mean_se},
          {"tau2_mc", p.tau2_mc},
          {"tau2_se", p.tau2_se},
          {"ratio_mc", p.ratio_mc},
          {"ratio_closed", p.ratio_closed}};
}

inline json to_json(const DichotomyReport& r) {
  return {{"theta", r.theta}, {"full_chain", to_json(r.full_chain)}, {"embedded_chain", to_json(r.embedded_chain)}};
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Minimal CSV writer; numbers are printed with round-trip precision.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& cell(const std::string& s) {
    rows_.back().push_back(s);
    return *this;
  }
  CsvTable& cell(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    rows_.back().push_back(os.str());
    return *this;
  }
  CsvTable& cell(long v) {
    rows_.back().push_back(std::to_string(v));
    return *this;
  }
  CsvTable& cell(std::uint64_t v) {
    rows_.back().push_back(std::to_string(v));
    return *this;
  }
  // Vector state as one quoted cell "x1;x2;..."
  CsvTable& cell(const Vector& x) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ";" : "") << x(i);
    rows_.back().push_back(os.str());
    return *this;
  }

  std::string render(const std::string& preamble) const {
    std::ostringstream os;
    if (!preamble.empty()) os << "# " << preamble << "\n";
    for (std::size_t i = 0; i < header_.size(); ++i) os << (i ? "," : "") << header_[i];
    os << "\n";
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << "\n";
    }
    return os.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace nearcrit
