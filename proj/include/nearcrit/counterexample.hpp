#pragma once

// The two-dimensional counterexample in (u, v) coordinates, u = ell x,
// v = (x1 - x2)/2, where the parity structure of the chain is exact:
//
//   band     = 2|v| <= sigma_bar(u)
//   u'       = u + g_bar(u) 1{band} + sigma_bar(u) chi
//   v'       = sigma_bar(u) zeta 1{band}
//
// Starting on the ray, even steps sit on the ray and odd steps sit outside
// the band, so the drift only acts every other step.
//
// Near the origin the chain contracts geometrically; states with u below the
// smallest normal double are treated as absorbed at the origin, since
// sigma_bar underflows there and the identities become degenerate.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nearcrit/conditions.hpp"
#include "nearcrit/core.hpp"
#include "nearcrit/geometry.hpp"
#include "nearcrit/model.hpp"
#include "nearcrit/parallel.hpp"
#include "nearcrit/simulate.hpp"
#include "nearcrit/spectral.hpp"

namespace nearcrit {

struct UVState {
  double u = 0.0;
  double v = 0.0;

  Vector to_x() const {
    Vector x(2);
    x << u + v, u - v;
    return x;
  }
};

struct UVStep {
  UVState next;
  bool band = false;
  double g = 0.0;  // drift actually applied to u
  double chi = 0.0;
  double zeta = 0.0;
};

/// One transition; draws chi then zeta every step, matching the state-space
/// model so both can share a stream.
inline UVStep uv_step(const CounterexampleParams& p, const UVState& x, Rng& rng) {
  UVStep out;
  out.chi = rng.sign();
  out.zeta = rng.sign();
  if (!(x.u >= std::numeric_limits<double>::min())) return out;  // absorbed: next = origin
  const double s = p.sigma_bar(x.u);
  out.band = 2.0 * std::abs(x.v) <= s;
  out.g = out.band ? p.g_bar(x.u) : 0.0;
  out.next.u = x.u + out.g + s * out.chi;
  out.next.v = out.band ? s * out.zeta : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Structure verification
// ---------------------------------------------------------------------------

struct StructureViolationRecord {
  std::uint64_t step = 0;
  std::string identity;  // "i" .. "iv"
  std::string detail;
};

struct StructureReport {
  std::uint64_t n_steps = 0;
  long episodes = 1;  // restarts from X_0 = r after absorption, plus one
  std::vector<std::uint64_t> absorbed_at;
  std::vector<StructureViolationRecord> violations;
  double cross_check_max_dev = 0.0;  // vs the state-space engine, relative
  bool cross_check_ok = true;

  bool ok() const { return violations.empty() && cross_check_ok; }
  void require_ok() const {
    if (!violations.empty()) {
      const auto& v = violations.front();
      throw StructureViolation("identity (" + v.identity + ") broken at step " + std::to_string(v.step) + ": " +
                               v.detail);
    }
    if (!cross_check_ok) {
      throw StructureViolation("state-space engine disagrees with (u, v) chain: relative deviation " +
                               std::to_string(cross_check_max_dev));
    }
  }
};

/// Runs n_steps of the (u, v) chain from X_0 = r and checks, for every pair
/// of steps (2n, 2n + 1):
///   (i)   v_{2n} = 0,
///   (ii)  |check X_{2n+1}|_1 = 2 sigma(X_{2n}),
///   (iii) sigma(X_{2n+1}) < |check X_{2n+1}|_1,
///   (iv)  no drift and no zeta at odd steps (v_{2n+2} = 0),
/// all with zero tolerance. When the chain is absorbed it restarts from r on
/// the same stream, so exactly n_steps transitions are checked. The
/// state-space model runs alongside on its own copy of the stream and must
/// agree to 1e-9 relative.
inline StructureReport verify_counterexample_structure(const CounterexampleParams& params, std::uint64_t n_steps,
                                                       std::uint64_t seed) {
  const ModelSpec model = make_counterexample_model(params);
  StructureReport rep;
  rep.n_steps = n_steps;
  auto flag = [&](std::uint64_t n, const char* id, std::string detail) {
    if (rep.violations.size() < 100) rep.violations.push_back({n, id, std::move(detail)});
  };

  Rng rng_uv(seed), rng_x(seed);
  const UVState start{1.0, 0.0};
  UVState z = start;
  Vector x = model.sd.r;
  std::uint64_t k = 0;  // step index within the current episode
  for (std::uint64_t n = 0; n < n_steps; ++n, ++k) {
    if (!(z.u >= std::numeric_limits<double>::min())) {
      rep.absorbed_at.push_back(n);
      ++rep.episodes;
      z = start;
      x = model.sd.r;
      k = 0;
    }
    const bool even = k % 2 == 0;
    if (even && z.v != 0.0) flag(n, "i", "v = " + std::to_string(z.v));
    const double sigma_here = params.sigma_bar(z.u);
    const UVStep st = uv_step(params, z, rng_uv);
    if (even) {
      const double check = 2.0 * std::abs(st.next.v);
      if (!(check == 2.0 * sigma_here)) flag(n + 1, "ii", "|check| = " + std::to_string(check));
      if (!(params.sigma_bar(st.next.u) < check)) flag(n + 1, "iii", "next state inside the band");
    } else if (st.band || st.g != 0.0 || st.next.v != 0.0) {
      flag(n, "iv", "drift or zeta active at an odd step");
    }
    z = st.next;

    x = step(model, x, rng_x);
    const Vector y = z.to_x();
    const double dev = (x - y).cwiseAbs().maxCoeff() / std::max(1.0, y.cwiseAbs().maxCoeff());
    rep.cross_check_max_dev = std::max(rep.cross_check_max_dev, dev);
  }
  rep.cross_check_ok = rep.cross_check_max_dev <= 1e-9;
  return rep;
}

// ---------------------------------------------------------------------------
// Embedded chain
// ---------------------------------------------------------------------------

/// tau^2(t) = sigma_bar^2(t) + (sigma_bar^2(t + g_bar + sigma_bar) + sigma_bar^2(t + g_bar - sigma_bar)) / 2,
/// the conditional variance of the two-step increment from the ray.
inline double embedded_tau2(const CounterexampleParams& p, double t) {
  const double s = p.sigma_bar(t), g = p.g_bar(t);
  const double up = p.sigma_bar(t + g + s), down = p.sigma_bar(t + g - s);
  return s * s + 0.5 * (up * up + down * down);
}

struct EmbeddedChainPoint {
  double t = 0.0;
  double sigma_bar = 0.0;
  double tau2_closed = 0.0;
  double mean = 0.0;  // of X_bar' - t - g_bar(t)
  double mean_se = 0.0;
  double tau2_mc = 0.0;
  double tau2_se = 0.0;
  double ratio_mc = 0.0;      // tau2_mc / sigma_bar^2
  double ratio_closed = 0.0;  // tau2_closed / sigma_bar^2
};

/// Two steps of the (u, v) chain from (t, 0).
inline double embedded_step(const CounterexampleParams& p, double t, Rng& rng) {
  const UVStep a = uv_step(p, {t, 0.0}, rng);
  return uv_step(p, a.next, rng).next.u;
}

/// Probe t_k uses Rng::stream(seed, k).
inline std::vector<EmbeddedChainPoint> embedded_chain_stats(const CounterexampleParams& params,
                                                            const std::vector<double>& t_grid, long n_samples,
                                                            std::uint64_t seed) {
  if (n_samples < 2) throw InvalidArgument("embedded_chain_stats needs n_samples >= 2");
  std::vector<EmbeddedChainPoint> out;
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    const double t = t_grid[k];
    if (!(t > 0.0)) throw InvalidArgument("embedded_chain_stats needs t > 0");
    Rng rng = Rng::stream(seed, k);
    EmbeddedChainPoint pt;
    pt.t = t;
    pt.sigma_bar = params.sigma_bar(t);
    pt.tau2_closed = embedded_tau2(params, t);
    const double shift = t + params.g_bar(t);
    double m1 = 0.0, m2 = 0.0, q1 = 0.0, q2 = 0.0;
    for (long i = 0; i < n_samples; ++i) {
      const double xi = embedded_step(params, t, rng) - shift;
      m1 += xi;
      m2 += xi * xi;
      q1 += xi * xi;
      q2 += xi * xi * xi * xi;
    }
    const double n = static_cast<double>(n_samples);
    pt.mean = m1 / n;
    pt.mean_se = std::sqrt(std::max(0.0, m2 / n - pt.mean * pt.mean) / (n - 1.0));
    pt.tau2_mc = q1 / n;
    pt.tau2_se = std::sqrt(std::max(0.0, q2 / n - pt.tau2_mc * pt.tau2_mc) / (n - 1.0));
    const double s2 = pt.sigma_bar * pt.sigma_bar;
    pt.ratio_mc = pt.tau2_mc / s2;
    pt.ratio_closed = pt.tau2_closed / s2;
    out.push_back(pt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dichotomy demonstration
// ---------------------------------------------------------------------------

struct DichotomySpec {
  double x0_scale = 25.0;  // X_0 = x0_scale * r
  double s = 10.0;
  double K = 1e4;
  std::uint64_t n_max = 1000000;
  long n_traj = 500;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

struct DichotomyReport {
  double theta = 0.0;
  EnsembleSummary full_chain;
  EnsembleSummary embedded_chain;
};

namespace detail {

// Thresholds are tested every step for the full chain and at even steps only
// for the embedded chain.
inline TrajectoryRecord run_uv(const CounterexampleParams& p, const DichotomySpec& spec, std::uint64_t seed,
                               bool embedded) {
  static const SpectralData sd = perron_decompose(counterexample_matrix());
  static const Norm l1 = Norm::l1();
  TrajectoryRecord rec;
  rec.seed = seed;
  rec.n_max = spec.n_max;
  Rng rng(seed);
  UVState z{spec.x0_scale, 0.0};
  const std::uint64_t per = embedded ? 2 : 1;
  std::uint64_t n = 0;
  while (n < spec.n_max) {
    for (std::uint64_t k = 0; k < per; ++k) z = uv_step(p, z, rng).next;
    ++n;
    if (z.u < spec.s || z.u > spec.K) {
      rec.outcome = z.u < spec.s ? Outcome::returned_below_s : Outcome::exceeded_K;
      rec.first_passage = n;
      break;
    }
  }
  rec.steps = n;
  rec.final_state = z.to_x();
  rec.final_angle = ray_angle(rec.final_state, sd, l1);
  return rec;
}

}  // namespace detail

/// Full-chain and embedded-chain ensembles; trajectory i of both uses
/// Rng(seed + i), so the embedded path is the even-time subsequence of the
/// full path up to the first crossing.
inline DichotomyReport counterexample_dichotomy_demo(const CounterexampleParams& params, const DichotomySpec& spec) {
  validate_counterexample_params(params);
  if (spec.n_traj < 100) throw InvalidArgument("counterexample_dichotomy_demo needs n_traj >= 100");
  if (!(spec.s < spec.x0_scale && spec.x0_scale < spec.K)) throw InvalidArgument("needs s < x0_scale < K");
  DichotomyReport rep;
  rep.theta = params.theta;
  for (const bool embedded : {false, true}) {
    std::vector<TrajectoryRecord> recs(static_cast<std::size_t>(spec.n_traj));
    parallel_for(recs.size(), spec.workers,
                 [&](std::size_t i) { recs[i] = detail::run_uv(params, spec, spec.seed + i, embedded); });
    (embedded ? rep.embedded_chain : rep.full_chain) = summarize(recs);
  }
  return rep;
}

/// The drift condition for transience on the band, b = 1 by default, on the
/// band-targeted sample in the l1 norm.
inline ConditionReport counterexample_band_condition(const CounterexampleParams& params, double epsilon = 0.4,
                                                     double b = 1.0, SamplerSpec sampler = {}) {
  const ModelSpec model = make_counterexample_model(params);
  return check_theorem2_condition(model, Norm::l1(), epsilon, b, sampler.a, sampler);
}

}  // namespace nearcrit
