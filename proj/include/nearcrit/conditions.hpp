#pragma once

// Sample-based checks of the recurrence/transience hypotheses. A report can
// only refute a universally quantified hypothesis; "holds" always means
// "holds on the sample".

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "nearcrit/core.hpp"
#include "nearcrit/geometry.hpp"
#include "nearcrit/lyapunov.hpp"
#include "nearcrit/model.hpp"
#include "nearcrit/spectral.hpp"

namespace nearcrit {

enum class ConditionId { thm1_drift, thm2_drift, A1, A2_remark1, A3 };

inline const char* to_string(ConditionId id) {
  switch (id) {
    case ConditionId::thm1_drift:
      return "thm1_drift";
    case ConditionId::thm2_drift:
      return "thm2_drift";
    case ConditionId::A1:
      return "A1";
    case ConditionId::A2_remark1:
      return "A2_remark1";
    case ConditionId::A3:
      return "A3";
  }
  return "?";
}

struct ConditionViolation {
  Vector state;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct ConditionReport {
  ConditionId id = ConditionId::thm1_drift;
  std::map<std::string, double> parameters;
  long tested_states = 0;
  long premise_states = 0;
  std::vector<ConditionViolation> violations;
  bool coverage_inconclusive = false;  // no sampled state met the premise
  std::vector<double> series;          // A3: running sup along the grid
  std::string note;

  bool holds_on_sample() const { return violations.empty(); }
  const char* verdict() const { return holds_on_sample() ? "holds_on_sample" : "violated"; }
};

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

/// Band-targeted sampler: for `levels` norm values log-spaced in
/// [a, span * a], the ray point t r plus `per_level` points t r + rho w with
/// random transverse directions w (ell w = 0, |w| = 1) and radii spread
/// evenly over [0, overshoot * band(t r)], clipped to the orthant. Optionally
/// adds the vertex rays e_i / ell_i at each level.
struct SamplerSpec {
  double a = 10.0;
  double span = 1e4;
  int levels = 40;
  int per_level = 24;
  double overshoot = 1.5;
  bool vertex_rays = true;
  std::uint64_t seed = 1;
};

namespace detail {

inline Vector random_transverse(const SpectralData& sd, const Norm& norm, Rng& rng) {
  const Eigen::Index d = sd.dim();
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = 2.0 * rng.uniform() - 1.0;
    Vector w = project(z, sd).check;
    const double n = norm(w);
    if (n > 1e-12) return w / n;
  }
  return Vector::Zero(d);
}

// Largest rho >= 0 with base + rho w in the orthant.
inline double orthant_reach(const Vector& base, const Vector& w) {
  double reach = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    if (w(i) < 0.0) reach = std::min(reach, base(i) / -w(i));
  }
  return reach;
}

}  // namespace detail

inline std::vector<Vector> sample_band_states(const SpectralData& sd, const Norm& norm, const SamplerSpec& spec,
                                              const std::function<double(const Vector&)>& band_radius) {
  if (!(spec.a > 0.0) || spec.levels < 1 || spec.per_level < 1) throw InvalidArgument("invalid sampler spec");
  Rng rng(spec.seed);
  const double r_norm = norm(sd.r);
  std::vector<Vector> out;
  for (int k = 0; k < spec.levels; ++k) {
    const double level = spec.levels == 1 ? spec.a : spec.a * std::pow(spec.span, static_cast<double>(k) / (spec.levels - 1));
    const Vector base = (level / r_norm) * sd.r;
    out.push_back(base);
    if (sd.dim() >= 2) {
      const double radius = spec.overshoot * band_radius(base);
      for (int j = 1; j <= spec.per_level; ++j) {
        const Vector w = detail::random_transverse(sd, norm, rng);
        const double rho = std::min(radius * j / spec.per_level, detail::orthant_reach(base, w));
        if (rho > 0.0 && std::isfinite(rho)) out.push_back(base + rho * w);
      }
    }
    if (spec.vertex_rays && sd.dim() >= 2) {
      for (Eigen::Index i = 0; i < sd.dim(); ++i) {
        const Vector e = Vector::Unit(sd.dim(), i);
        out.push_back((level / norm(e)) * e);
      }
    }
  }
  return out;
}

/// Points with ell x uniform in [u, u + 1] and uniform transverse radius up
/// to the orthant boundary.
inline std::vector<Vector> sample_slab_states(const SpectralData& sd, double u, int n, Rng& rng) {
  std::vector<Vector> out;
  const Norm l1 = Norm::l1();
  for (int k = 0; k < n; ++k) {
    const double t = u + rng.uniform();
    const Vector base = t * sd.r;
    if (sd.dim() == 1 || k == 0) {
      out.push_back(base);
      continue;
    }
    const Vector w = detail::random_transverse(sd, l1, rng);
    const double reach = detail::orthant_reach(base, w);
    out.push_back(base + (std::isfinite(reach) ? rng.uniform() * reach : 0.0) * w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Drift conditions
// ---------------------------------------------------------------------------

namespace detail {
constexpr double kRelTol = 1e-12;
inline double slack(double a, double b) { return kRelTol * std::max(std::abs(a), std::abs(b)); }
}  // namespace detail

/// |x| >= a and |check x|^2 <= b |x| |g(x)|  =>  ell x * ell g(x) <= (1 - eps)/2 sigma^2(x).
inline ConditionReport check_theorem1_condition(const ModelSpec& model, const Norm& norm, double epsilon, double b,
                                                double a, const std::vector<Vector>& states) {
  if (!(a > 0.0) || !(b > 0.0) || !(epsilon > 0.0 && epsilon < 1.0)) {
    throw InvalidArgument("check_theorem1_condition needs a > 0, b > 0, 0 < epsilon < 1");
  }
  ConditionReport rep;
  rep.id = ConditionId::thm1_drift;
  rep.parameters = {{"epsilon", epsilon}, {"b", b}, {"a", a}};
  const SpectralData& sd = model.sd;
  for (const Vector& x : states) {
    if (!(norm(x) >= a)) continue;
    ++rep.tested_states;
    const Vector g = model.g(x);
    const double check = norm(project(x, sd).check);
    if (!(check * check <= b * norm(x) * norm(g))) continue;
    ++rep.premise_states;
    const double sigma = model.sigma(x);
    const double lhs = ell_dot(sd, x) * ell_dot(sd, g);
    const double rhs = (1.0 - epsilon) / 2.0 * sigma * sigma;
    if (lhs > rhs + detail::slack(lhs, rhs)) rep.violations.push_back({x, lhs, rhs});
  }
  rep.coverage_inconclusive = rep.premise_states == 0;
  if (rep.coverage_inconclusive) rep.note = "EmptyPremiseSet: no sampled state satisfied the premise";
  return rep;
}

/// |x| >= a and |check x| <= b sigma(x)  =>  ell x * ell g(x) >= (1 + eps)/2 sigma^2(x).
inline ConditionReport check_theorem2_condition(const ModelSpec& model, const Norm& norm, double epsilon, double b,
                                                double a, const std::vector<Vector>& states) {
  if (!(a > 0.0) || !(b > 0.0) || !(epsilon > 0.0)) {
    throw InvalidArgument("check_theorem2_condition needs a > 0, b > 0, epsilon > 0");
  }
  ConditionReport rep;
  rep.id = ConditionId::thm2_drift;
  rep.parameters = {{"epsilon", epsilon}, {"b", b}, {"a", a}};
  const SpectralData& sd = model.sd;
  for (const Vector& x : states) {
    if (!(norm(x) >= a)) continue;
    ++rep.tested_states;
    const double sigma = model.sigma(x);
    if (!(norm(project(x, sd).check) <= b * sigma)) continue;
    ++rep.premise_states;
    const double lhs = ell_dot(sd, x) * ell_dot(sd, model.g(x));
    const double rhs = (1.0 + epsilon) / 2.0 * sigma * sigma;
    if (lhs < rhs - detail::slack(lhs, rhs)) rep.violations.push_back({x, lhs, rhs});
  }
  rep.coverage_inconclusive = rep.premise_states == 0;
  if (rep.coverage_inconclusive) rep.note = "EmptyPremiseSet: no sampled state satisfied the premise";
  return rep;
}

/// Band-targeted convenience overloads: the sampler's radius is the premise
/// band for the given b.
inline ConditionReport check_theorem1_condition(const ModelSpec& model, const Norm& norm, double epsilon, double b,
                                                double a, SamplerSpec sampler) {
  sampler.a = a;
  const auto states = sample_band_states(model.sd, norm, sampler, [&](const Vector& x) {
    return std::sqrt(b * norm(x) * norm(model.g(x)));
  });
  return check_theorem1_condition(model, norm, epsilon, b, a, states);
}

inline ConditionReport check_theorem2_condition(const ModelSpec& model, const Norm& norm, double epsilon, double b,
                                                double a, SamplerSpec sampler) {
  sampler.a = a;
  const auto states =
      sample_band_states(model.sd, norm, sampler, [&](const Vector& x) { return b * model.sigma(x); });
  return check_theorem2_condition(model, norm, epsilon, b, a, states);
}

// ---------------------------------------------------------------------------
// Assumptions
// ---------------------------------------------------------------------------

/// Empirical E|xi|^p / sigma^p at each state against model.c_moment.
inline ConditionReport check_A1(const ModelSpec& model, const std::vector<Vector>& states, long n_samples,
                                std::uint64_t seed) {
  if (!(model.p > 2.0)) throw InvalidArgument("check_A1 needs p > 2");
  ConditionReport rep;
  rep.id = ConditionId::A1;
  rep.parameters = {{"p", model.p}, {"c_moment", model.c_moment}};
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!(model.sigma(states[i]) > 0.0)) continue;
    ++rep.tested_states;
    ++rep.premise_states;
    Rng rng = Rng::stream(seed, i);
    const NoiseMomentsReport m = noise_moments_check(model, states[i], n_samples, rng);
    if (m.moment_flag) rep.violations.push_back({states[i], m.p_moment_ratio, model.c_moment});
  }
  rep.coverage_inconclusive = rep.tested_states == 0;
  return rep;
}

inline std::vector<double> default_a3_grid() { return log_grid(10.0, 1e12, 133); }

/// Boundedness proxy for sigma(x) = O(|x| log^-kappa |x|): the running sup of
/// sigma(x) (log |x|)^kappa / |x| along the ray (l1 norm) must not grow by
/// more than 1% over the last decade of the grid.
inline ConditionReport check_A3(const ModelSpec& model, double kappa, const std::vector<double>& t_grid) {
  const double delta = model.delta_max;
  if (!(kappa > 0.0) || !(kappa > 1.0 / delta)) {
    throw InvalidArgument("check_A3 needs kappa > 1/delta (delta = " + std::to_string(delta) + ")");
  }
  if (t_grid.size() < 2) throw InvalidArgument("check_A3 needs at least two grid points");
  ConditionReport rep;
  rep.id = ConditionId::A3;
  rep.parameters = {{"kappa", kappa}};
  const Vector dir = model.sd.r / model.sd.r.lpNorm<1>();
  double sup = 0.0;
  std::vector<double> ts;
  for (double t : t_grid) {
    if (!(t > 1.0)) continue;
    const Vector x = t * dir;
    const double ratio = model.sigma(x) * std::pow(std::log(t), kappa) / t;
    sup = std::max(sup, ratio);
    rep.series.push_back(sup);
    ts.push_back(t);
    ++rep.tested_states;
  }
  rep.premise_states = rep.tested_states;
  if (ts.size() < 2) throw InvalidArgument("check_A3 grid needs points above t = 1");
  const double edge = ts.back() / 10.0;
  double before = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] <= edge) before = rep.series[i];
  }
  if (before == 0.0) before = rep.series.front();
  if (rep.series.back() > before * 1.01) {
    rep.violations.push_back({ts.back() * dir, rep.series.back(), before});
    rep.note = "running sup still growing over the last decade";
  }
  return rep;
}

/// Slab criterion for A2: inf of ell g over each slab u <= ell x <= u + 1
/// must stay above 1e-8.
inline ConditionReport check_A2_remark1(const ModelSpec& model, const std::vector<double>& u_grid, int per_slab,
                                        std::uint64_t seed) {
  if (per_slab < 1) throw InvalidArgument("EmptyPremiseSet: slab sampler draws no states");
  ConditionReport rep;
  rep.id = ConditionId::A2_remark1;
  rep.parameters = {{"tolerance", 1e-8}};
  for (std::size_t k = 0; k < u_grid.size(); ++k) {
    const double u = u_grid[k];
    if (!(u > 0.0)) throw InvalidArgument("check_A2_remark1 needs u > 0");
    Rng rng = Rng::stream(seed, k);
    const auto states = sample_slab_states(model.sd, u, per_slab, rng);
    double inf = std::numeric_limits<double>::infinity();
    Vector arg;
    for (const Vector& x : states) {
      ++rep.tested_states;
      const double lg = ell_dot(model.sd, model.g(x));
      if (lg < inf) {
        inf = lg;
        arg = x;
      }
    }
    rep.premise_states = rep.tested_states;
    rep.series.push_back(inf);
    if (inf < 1e-8) rep.violations.push_back({arg, inf, 1e-8});
  }
  return rep;
}

}  // namespace nearcrit
