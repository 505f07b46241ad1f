#pragma once

// Trajectory engine, ensemble classification and ray diagnostics.
//
// "Escape" is proxied by ell X_n exceeding K before falling below s; the
// mass that does neither within n_max steps is reported as undecided.
// Trajectory i of an ensemble is driven by Rng(base_seed + i).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nearcrit/core.hpp"
#include "nearcrit/geometry.hpp"
#include "nearcrit/model.hpp"
#include "nearcrit/parallel.hpp"
#include "nearcrit/spectral.hpp"

namespace nearcrit {

enum class Outcome { returned_below_s, exceeded_K, undecided };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::returned_below_s:
      return "returned_below_s";
    case Outcome::exceeded_K:
      return "exceeded_K";
    case Outcome::undecided:
      return "undecided";
  }
  return "?";
}

struct TrajectoryPoint {
  std::uint64_t n = 0;
  double ell_x = 0.0;
  double check_norm = 0.0;
  double angle = 0.0;
};

/// Constants of |check X_{n+1}| <= rho |check X_n| + c_g ell g(X_n) + c_xi |xi_{n+1}|
/// in a given norm.
struct TransverseBound {
  double rho = 0.0;
  double c_g = 0.0;
  double c_xi = 0.0;
};

inline TransverseBound make_transverse_bound(const SpectralData& sd, const Norm& norm) {
  const Matrix P = Matrix::Identity(sd.dim(), sd.dim()) - sd.rank_one();
  return {norm.induced(sd.M - sd.rank_one()), cone_constant(sd, norm).lambda, norm.induced(P)};
}

struct TrajectoryOptions {
  std::optional<Norm> norm;  // angle / transverse norm; contraction norm when empty
  std::uint64_t stride = 0;  // 0: max(1, n_max / 10^4)
  bool keep_series = true;
  bool check_transverse_bound = false;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::uint64_t n_max = 0;
  std::uint64_t stride = 1;
  std::vector<TrajectoryPoint> series;
  Outcome outcome = Outcome::undecided;
  std::optional<std::uint64_t> first_passage;  // step of the deciding crossing
  std::uint64_t steps = 0;
  double final_angle = 0.0;
  double half_angle = 0.0;  // angle at the recorded point nearest steps/2
  long bound_checks = 0;
  long bound_violations = 0;
  double max_bound_excess = -std::numeric_limits<double>::infinity();
  Vector final_state;
};

/// |x/|x| - r/|r|| in `norm`; 1 at the origin.
inline double ray_angle(const Vector& x, const SpectralData& sd, const Norm& norm) {
  const double nx = norm(x);
  const Vector ray = sd.r / norm(sd.r);
  if (!(nx > 0.0)) return norm(ray);
  return norm(Vector(x / nx - ray));
}

namespace detail {

inline Norm default_norm(const ModelSpec& model) { return Norm::weighted(build_contraction_norm(model.sd)); }

inline TrajectoryPoint make_point(std::uint64_t n, const Vector& x, const SpectralData& sd, const Norm& norm) {
  return {n, ell_dot(sd, x), norm(project(x, sd).check), ray_angle(x, sd, norm)};
}

}  // namespace detail

inline TrajectoryRecord run_trajectory(const ModelSpec& model, const Vector& x0, double s, double K,
                                       std::uint64_t n_max, std::uint64_t seed, const TrajectoryOptions& opt = {}) {
  const SpectralData& sd = model.sd;
  if (x0.size() != sd.dim()) throw InvalidArgument("x0 has the wrong dimension");
  if (!in_orthant(x0)) throw InvalidArgument("x0 must lie in the orthant");
  const double t0 = ell_dot(sd, x0);
  if (!(s < t0 && t0 < K)) throw InvalidArgument("run_trajectory needs s < ell x0 < K");

  const Norm norm = opt.norm ? *opt.norm : detail::default_norm(model);
  std::optional<TransverseBound> bound;
  if (opt.check_transverse_bound) bound = make_transverse_bound(sd, norm);

  TrajectoryRecord rec;
  rec.seed = seed;
  rec.n_max = n_max;
  rec.stride = opt.stride > 0 ? opt.stride : std::max<std::uint64_t>(1, n_max / 10000);
  rec.series.push_back(detail::make_point(0, x0, sd, norm));

  Rng rng(seed);
  Vector x = x0;
  double check_prev = rec.series.front().check_norm;
  std::uint64_t n = 0;
  while (n < n_max) {
    const bool absorbed = model.absorbing && model.absorbing(x);
    StepResult res = step_detailed(model, x, rng);
    ++n;
    x = std::move(res.next);
    const double t = ell_dot(sd, x);
    const double check_now = norm(project(x, sd).check);
    if (bound && !absorbed) {
      const double rhs = bound->rho * check_prev + bound->c_g * ell_dot(sd, res.g) + bound->c_xi * norm(res.xi);
      const double excess = check_now - rhs;
      ++rec.bound_checks;
      rec.max_bound_excess = std::max(rec.max_bound_excess, excess);
      if (excess > 1e-9 * std::max(1.0, rhs)) ++rec.bound_violations;
    }
    check_prev = check_now;

    const bool below = t < s, above = t > K;
    if (below || above || n % rec.stride == 0 || n == n_max) {
      rec.series.push_back({n, t, check_now, ray_angle(x, sd, norm)});
    }
    if (below || above) {
      rec.outcome = below ? Outcome::returned_below_s : Outcome::exceeded_K;
      rec.first_passage = n;
      break;
    }
  }
  rec.steps = n;
  rec.final_state = x;
  rec.final_angle = rec.series.back().angle;
  const double half = static_cast<double>(n) / 2.0;
  auto nearest = std::min_element(rec.series.begin(), rec.series.end(), [half](const auto& a, const auto& b) {
    return std::abs(static_cast<double>(a.n) - half) < std::abs(static_cast<double>(b.n) - half);
  });
  rec.half_angle = nearest->angle;
  if (!opt.keep_series) {
    rec.series.clear();
    rec.series.shrink_to_fit();
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval at 95%.
inline Interval wilson_interval(long successes, long n, double z = 1.959963984540054) {
  if (n <= 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = successes / nn;
  const double denom = 1.0 + z * z / nn;
  const double centre = (p + z * z / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Nearest-rank quantile.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, k == 0 ? 0 : k - 1)];
}

struct EnsembleSummary {
  long n_traj = 0;
  long escaped = 0, returned = 0, undecided = 0;
  double escape_fraction = 0.0;
  Interval escape_ci;
  double return_fraction = 0.0;
  double undecided_fraction = 0.0;
  double median_final_angle = std::numeric_limits<double>::quiet_NaN();  // over escapers
};

inline EnsembleSummary summarize(const std::vector<TrajectoryRecord>& records) {
  EnsembleSummary s;
  s.n_traj = static_cast<long>(records.size());
  std::vector<double> angles;
  for (const auto& r : records) {
    switch (r.outcome) {
      case Outcome::exceeded_K:
        ++s.escaped;
        angles.push_back(r.final_angle);
        break;
      case Outcome::returned_below_s:
        ++s.returned;
        break;
      case Outcome::undecided:
        ++s.undecided;
        break;
    }
  }
  if (s.n_traj > 0) {
    const double n = static_cast<double>(s.n_traj);
    s.escape_fraction = s.escaped / n;
    s.return_fraction = s.returned / n;
    s.undecided_fraction = 1.0 - (s.escape_fraction + s.return_fraction);
  }
  s.escape_ci = wilson_interval(s.escaped, s.n_traj);
  s.median_final_angle = median(angles);
  return s;
}

struct EnsembleResult {
  EnsembleSummary summary;
  std::vector<TrajectoryRecord> records;
};

inline EnsembleResult classify_ensemble(const ModelSpec& model, const Vector& x0, double s, double K,
                                        std::uint64_t n_max, long n_traj, std::uint64_t base_seed,
                                        TrajectoryOptions opt = {}, unsigned workers = 1) {
  if (n_traj < 100) throw InvalidArgument("classify_ensemble needs n_traj >= 100");
  if (!opt.norm) opt.norm = detail::default_norm(model);
  EnsembleResult out;
  out.records.resize(static_cast<std::size_t>(n_traj));
  parallel_for(out.records.size(), workers, [&](std::size_t i) {
    out.records[i] = run_trajectory(model, x0, s, K, n_max, base_seed + i, opt);
  });
  out.summary = summarize(out.records);
  return out;
}

struct RayDiagnostic {
  long n_escapers = 0;
  std::vector<double> final_angles;
  std::vector<double> half_angles;
  double median_final = 0.0;
  double p90_final = 0.0;
  double median_half = 0.0;
  double fraction_decreasing = 0.0;  // share of escapers with final < half-horizon angle
};

inline RayDiagnostic ray_diagnostic(const std::vector<TrajectoryRecord>& records) {
  RayDiagnostic d;
  long decreasing = 0;
  for (const auto& r : records) {
    if (r.outcome != Outcome::exceeded_K) continue;
    d.final_angles.push_back(r.final_angle);
    d.half_angles.push_back(r.half_angle);
    decreasing += r.final_angle < r.half_angle;
  }
  d.n_escapers = static_cast<long>(d.final_angles.size());
  if (d.n_escapers == 0) throw NoEscapers("ray_diagnostic needs at least one record that exceeded K");
  d.median_final = median(d.final_angles);
  d.p90_final = quantile(d.final_angles, 0.9);
  d.median_half = median(d.half_angles);
  d.fraction_decreasing = static_cast<double>(decreasing) / d.n_escapers;
  return d;
}

}  // namespace nearcrit
