#pragma once

// Lyapunov functionals, the scalar log / (log t)^-beta Taylor bounds they rely
// on, and Monte Carlo estimation of their conditional drift.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nearcrit/core.hpp"
#include "nearcrit/geometry.hpp"
#include "nearcrit/model.hpp"
#include "nearcrit/parallel.hpp"
#include "nearcrit/spectral.hpp"

namespace nearcrit {

struct LyapunovParams {
  double alpha = 1.0;
  double beta = -1.0;  // -1 or > 0
  double gamma = 0.0;
  int j = 1;           // one-based component index
  double s = 10.0;     // certification threshold on ell x
  Norm norm = Norm::l1();
};

/// Throws InvalidArgument unless lp satisfies its invariants. `rho` is the
/// contraction rate of M - r ell in lp.norm (needed when gamma > 0).
inline void validate(const LyapunovParams& lp, const SpectralData& sd, double rho) {
  if (!(lp.alpha > 0.0)) throw InvalidArgument("lyapunov.alpha must be > 0");
  if (!(lp.beta == -1.0 || lp.beta > 0.0)) throw InvalidArgument("lyapunov.beta must be -1 or > 0");
  if (!(lp.gamma >= 0.0)) throw InvalidArgument("lyapunov.gamma must be >= 0");
  if (lp.j < 1 || lp.j > sd.dim()) throw InvalidArgument("lyapunov.j must lie in 1..d");
  if (!(lp.s > std::exp(1.0))) throw InvalidArgument("lyapunov.s must exceed e");
  if (lp.gamma > 0.0) {
    const double factor = (1.0 + lp.gamma / sd.ell(lp.j - 1)) * rho * rho;
    if (!(factor < 1.0)) {
      throw InvalidArgument("lyapunov.gamma too large: (1 + gamma/ell_j) rho^2 = " + std::to_string(factor) +
                            " must be < 1");
    }
  }
}

namespace detail {
inline double transverse_ratio(double check_norm, double t) { return (check_norm * check_norm) / (t * t); }
}  // namespace detail

/// |check x|^2 / (ell x)^2 + alpha log(ell x), defined for ell x >= 1.
inline double lyap_theorem1(const Vector& x, double alpha, const SpectralData& sd, const Norm& norm) {
  const double t = ell_dot(sd, x);
  if (!(t >= 1.0)) throw DomainError("lyap_theorem1 needs ell x >= 1, got " + std::to_string(t));
  const double n = norm(project(x, sd).check);
  return detail::transverse_ratio(n, t) + alpha * std::log(t);
}

/// (1 + gamma x_j / ell x) |check x|^2 / ((ell x)^2 (log ell x)^(beta+1))
///   + alpha (log ell x)^(-beta).
/// Domain: ell x >= 3 for beta > 0, ell x >= 1 for beta = -1.
inline double lyap_general(const Vector& x, const LyapunovParams& lp, const SpectralData& sd) {
  const double t = ell_dot(sd, x);
  const bool log_case = lp.beta == -1.0;
  const double lower = log_case ? 1.0 : 3.0;
  if (!(t >= lower)) {
    throw DomainError("lyap_general needs ell x >= " + std::to_string(lower) + ", got " + std::to_string(t));
  }
  const double L = std::log(t);
  const double weight = 1.0 + lp.gamma * x(lp.j - 1) / t;
  const double n = lp.norm(project(x, sd).check);
  const double transverse = log_case ? weight * detail::transverse_ratio(n, t)
                                     : weight * detail::transverse_ratio(n, t) * std::pow(L, -lp.beta - 1.0);
  const double radial = log_case ? lp.alpha * L : lp.alpha * std::pow(L, -lp.beta);
  return transverse + radial;
}

// ---------------------------------------------------------------------------
// Scalar bounds
// ---------------------------------------------------------------------------

/// log t + h/t - h^2 / (2 (1 + eta) t^2) 1{h <= eta t}; bounds log(t + h).
inline double lemma1_rhs(double t, double h, double eta) {
  if (!(t > 0.0) || !(h > -t) || !(eta > 0.0)) throw DomainError("lemma1_rhs needs t > 0, h > -t, eta > 0");
  const double u = h / t;
  const double quad = h <= eta * t ? u * u / (2.0 * (1.0 + eta)) : 0.0;
  return std::log(t) + u - quad;
}

/// rhs - log(t + h) evaluated in the scale-free form
/// u - u^2/(2(1+eta)) 1{u <= eta} - log1p(u), u = h/t.
inline double lemma1_margin(double u, double eta) {
  const double quad = u <= eta ? u * u / (2.0 * (1.0 + eta)) : 0.0;
  return u - quad - std::log1p(u);
}

struct Lemma3Terms {
  double f, df, d2f;
};

// f(t) = (log t)^-beta with its first two derivatives.
inline Lemma3Terms lemma3_terms(double t, double beta) {
  const double L = std::log(t);
  const double f = std::pow(L, -beta);
  return {f, -beta * f / (L * t), beta * f * (beta + 1.0 + L) / (L * L * t * t)};
}

inline void lemma3_domain(double t, double h, double beta, double p) {
  if (!(t >= 3.0) || !(h > 3.0 - t) || !(beta > 0.0) || !(p > 2.0 && p <= 3.0)) {
    throw DomainError("lemma3 needs t >= 3, h > 3 - t, beta > 0, 2 < p <= 3");
  }
}

/// f(t) + f'(t) h + f''(t) h^2 / 2 + c |h|^p / ((log t)^(beta+1) t^p) + 1{h <= -t/2}
/// for f(t) = (log t)^-beta; bounds f(t + h).
inline double lemma3_rhs(double t, double h, double beta, double p, double c) {
  lemma3_domain(t, h, beta, p);
  if (!(c > 0.0)) throw DomainError("lemma3_rhs needs c > 0");
  const Lemma3Terms k = lemma3_terms(t, beta);
  const double L = std::log(t);
  const double remainder = c * std::pow(std::abs(h), p) / (std::pow(L, beta + 1.0) * std::pow(t, p));
  return k.f + k.df * h + 0.5 * k.d2f * h * h + remainder + (h <= -t / 2.0 ? 1.0 : 0.0);
}

inline double lemma3_f(double t, double beta) { return std::pow(std::log(t), -beta); }

/// Smallest c making the bound hold at (t, h = u t), in scale-free form:
///   [L expm1(-beta log1p(log1p(u)/L)) + beta u - beta (beta + 1 + L) u^2 / (2L)] / |u|^p,
/// clipped at 0. Points where the indicator fires need no c.
inline double lemma3_required_constant(double t, double u, double beta, double p) {
  if (u == 0.0 || u <= -0.5) return 0.0;
  const double L = std::log(t);
  const double exact = L * std::expm1(-beta * std::log1p(std::log1p(u) / L));
  const double taylor = -beta * u + beta * (beta + 1.0 + L) * u * u / (2.0 * L);
  return std::max(0.0, (exact - taylor) / std::pow(std::abs(u), p));
}

/// Rectangular (t, u = h/t) grid; t log-spaced, u linear. Points outside the
/// domain h > 3 - t, or with |h| > t^h_cap_exponent when that cap is set, are
/// skipped.
struct Lemma3Grid {
  double t_min = 3.0;
  double t_max = 1e6;
  int n_t = 300;  // the sup sits near t = 6, u = u_min; coarser t spacing misses it
  double u_min = -0.49;
  double u_max = 10.0;
  int n_u = 120;
  double h_cap_exponent = std::numeric_limits<double>::infinity();

  Lemma3Grid refined(int factor) const {
    Lemma3Grid g = *this;
    g.n_t = (n_t - 1) * factor + 1;
    g.n_u = (n_u - 1) * factor + 1;
    return g;
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (int a = 0; a < n_t; ++a) {
      const double t = n_t == 1 ? t_min : t_min * std::pow(t_max / t_min, static_cast<double>(a) / (n_t - 1));
      for (int b = 0; b < n_u; ++b) {
        const double u = n_u == 1 ? u_min : u_min + (u_max - u_min) * b / (n_u - 1);
        const double h = u * t;
        if (!(h > 3.0 - t)) continue;
        if (std::abs(h) > std::pow(t, h_cap_exponent)) continue;
        fn(t, u);
      }
    }
  }
};

struct Lemma3Constant {
  double c = 0.0;         // safety factor 1.1 applied
  double c_needed = 0.0;  // max over the grid
  double at_t = 0.0;
  double at_u = 0.0;
  long points = 0;
};

inline Lemma3Constant find_lemma3_constant(double beta, double p, const Lemma3Grid& grid) {
  if (!(beta > 0.0) || !(p > 2.0 && p <= 3.0)) throw DomainError("find_lemma3_constant needs beta > 0, 2 < p <= 3");
  Lemma3Constant out;
  grid.for_each([&](double t, double u) {
    ++out.points;
    const double need = lemma3_required_constant(t, u, beta, p);
    if (need > out.c_needed) {
      out.c_needed = need;
      out.at_t = t;
      out.at_u = u;
    }
  });
  if (out.points == 0) throw InvalidArgument("lemma3 grid contains no admissible point");
  out.c = 1.1 * std::max(out.c_needed, std::numeric_limits<double>::min());
  return out;
}

/// Number of grid points where f(t + h) > lemma3_rhs(t, h, beta, p, c),
/// using the direct (not scale-free) evaluation.
inline long lemma3_violations(double beta, double p, double c, const Lemma3Grid& grid) {
  long bad = 0;
  grid.for_each([&](double t, double u) {
    const double h = u * t;
    if (lemma3_f(t + h, beta) > lemma3_rhs(t, h, beta, p, c)) ++bad;
  });
  return bad;
}

// ---------------------------------------------------------------------------
// Drift estimation
// ---------------------------------------------------------------------------

enum class DriftMode { lemma2, lemma4 };
enum class Verdict { pass, fail, inconclusive };

inline const char* to_string(DriftMode m) { return m == DriftMode::lemma2 ? "lemma2" : "lemma4"; }
inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::inconclusive:
      return "inconclusive";
  }
  return "?";
}

struct DriftEstimate {
  Vector state;
  long n_samples = 0;
  double drift_mean = 0.0;
  double drift_se = 0.0;
  double remainder_term = 0.0;  // sigma^p / (ell x)^p in lemma4 mode, else 0
  Verdict verdict = Verdict::inconclusive;

  double upper() const { return drift_mean + remainder_term + 3.0 * drift_se; }
  double lower() const { return drift_mean + remainder_term - 3.0 * drift_se; }
};

/// Functional evaluated by estimate_drift: the log functional in lemma2 mode
/// (alpha and norm from lp), the general family in lemma4 mode.
inline double lyapunov_value(const Vector& x, const LyapunovParams& lp, const SpectralData& sd, DriftMode mode) {
  return mode == DriftMode::lemma2 ? lyap_theorem1(x, lp.alpha, sd, lp.norm) : lyap_general(x, lp, sd);
}

/// Monte Carlo estimate of E[L(X_1) | X_0 = x] - L(x). Verdict: pass iff
/// mean + remainder + 3 SE <= 0, fail iff mean + remainder - 3 SE > 0.
inline DriftEstimate estimate_drift(const ModelSpec& model, const LyapunovParams& lp, const Vector& x,
                                    long n_samples, DriftMode mode, Rng& rng) {
  if (n_samples < 1000) throw InvalidArgument("estimate_drift needs n_samples >= 1000");
  const double t = ell_dot(model.sd, x);
  if (!(t >= lp.s)) {
    throw DomainError("estimate_drift needs ell x >= s (" + std::to_string(t) + " < " + std::to_string(lp.s) + ")");
  }
  DriftEstimate est;
  est.state = x;
  est.n_samples = n_samples;
  const double L0 = lyapunov_value(x, lp, model.sd, mode);

  // Welford accumulation of L(X_1) - L(x)
  double mean = 0.0, m2 = 0.0;
  for (long k = 0; k < n_samples; ++k) {
    const Vector next = step(model, x, rng);
    double value;
    try {
      value = lyapunov_value(next, lp, model.sd, mode) - L0;
    } catch (const DomainError& e) {
      std::string coords;
      for (Eigen::Index i = 0; i < next.size(); ++i) coords += (i ? "," : "") + std::to_string(next(i));
      throw DomainError(std::string(e.what()) + " at sampled next state (" + coords + "); raise s");
    }
    const double delta = value - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (value - mean);
  }
  const double n = static_cast<double>(n_samples);
  est.drift_mean = mean;
  est.drift_se = std::sqrt(m2 / (n - 1.0) / n);
  if (mode == DriftMode::lemma4) est.remainder_term = std::pow(model.sigma(x) / t, model.p);
  if (est.upper() <= 0.0) {
    est.verdict = Verdict::pass;
  } else if (est.lower() > 0.0) {
    est.verdict = Verdict::fail;
  } else {
    est.verdict = Verdict::inconclusive;
  }
  return est;
}

struct CertificationReport {
  DriftMode mode = DriftMode::lemma2;
  std::vector<DriftEstimate> estimates;
  double pass_fraction = 1.0;  // vacuously 1 for an empty region
  long passed = 0, failed = 0, inconclusive = 0;
  long worst_index = -1;  // state with the largest mean + remainder + 3 SE

  bool all_pass() const { return passed == static_cast<long>(estimates.size()); }
};

/// States t (r + o w) for t in `ell_grid` and o in `offsets` (w the
/// transverse direction, |o| <= 1 keeps them in the orthant).
inline std::vector<Vector> probe_states(const SpectralData& sd, const std::vector<double>& ell_grid,
                                        const std::vector<double>& offsets = {0.0}) {
  const Vector w = detail::transverse_direction(sd);
  std::vector<Vector> out;
  for (double t : ell_grid) {
    for (double o : offsets) {
      if (std::abs(o) > 1.0) throw InvalidArgument("transverse offsets must lie in [-1, 1]");
      out.push_back(t * (sd.r + o * w));
      if (sd.dim() == 1) break;
    }
  }
  return out;
}

inline std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g;
  if (n <= 0) return g;
  if (n == 1) return {lo};
  for (int k = 0; k < n; ++k) g.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / (n - 1)));
  return g;
}

/// Drift estimates at each state; state i draws from Rng::stream(seed, i),
/// so the report does not depend on `workers`.
inline CertificationReport certify_region(const ModelSpec& model, const LyapunovParams& lp,
                                          const std::vector<Vector>& states, long n_samples, DriftMode mode,
                                          std::uint64_t seed, unsigned workers = 1) {
  CertificationReport rep;
  rep.mode = mode;
  rep.estimates.resize(states.size());
  parallel_for(states.size(), workers, [&](std::size_t i) {
    Rng rng = Rng::stream(seed, i);
    rep.estimates[i] = estimate_drift(model, lp, states[i], n_samples, mode, rng);
  });
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rep.estimates.size(); ++i) {
    const DriftEstimate& e = rep.estimates[i];
    rep.passed += e.verdict == Verdict::pass;
    rep.failed += e.verdict == Verdict::fail;
    rep.inconclusive += e.verdict == Verdict::inconclusive;
    if (e.upper() > worst) {
      worst = e.upper();
      rep.worst_index = static_cast<long>(i);
    }
  }
  if (!rep.estimates.empty()) rep.pass_fraction = static_cast<double>(rep.passed) / rep.estimates.size();
  return rep;
}

struct SweepSpec {
  std::vector<double> alphas{1.0, 10.0, 100.0};
  std::vector<double> thresholds{1e2, 1e3};
  int n_probes = 20;
  double probe_span = 1.5;  // probes are log-spaced on [s, span * s]
  std::vector<double> offsets{0.0};
  long n_samples = 100000;
  DriftMode mode = DriftMode::lemma2;
  double shift = 0.0;  // probe states move by shift * r, keeping them inside the functional's domain
};

struct SweepEntry {
  double alpha = 0.0;
  double s = 0.0;
  CertificationReport report;
};

/// Heuristic (alpha, s) sweep. For each s the probe states and their random
/// streams are shared by every alpha.
inline std::vector<SweepEntry> drift_sweep(const ModelSpec& model, LyapunovParams base, const SweepSpec& spec,
                                           std::uint64_t seed, unsigned workers = 1) {
  std::vector<SweepEntry> out;
  for (std::size_t si = 0; si < spec.thresholds.size(); ++si) {
    const double s = spec.thresholds[si];
    auto states = probe_states(model.sd, log_grid(s, spec.probe_span * s, spec.n_probes), spec.offsets);
    for (Vector& x : states) x += spec.shift * model.sd.r;
    for (double alpha : spec.alphas) {
      LyapunovParams lp = base;
      lp.alpha = alpha;
      lp.s = s;
      out.push_back({alpha, s, certify_region(model, lp, states, spec.n_samples, spec.mode, splitmix64(seed + si),
                                              workers)});
    }
  }
  return out;
}

/// alpha >= 6c/eps - c, the shape of the large-alpha requirement for the
/// log functional; c is an empirical constant.
inline double recommended_alpha(double c, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  return 6.0 * c / epsilon - c;
}

/// Upper end kappa delta - 1 of the admissible beta range for the general
/// functional; reported as a diagnostic.
inline double lemma4_beta_bound(double kappa, double delta) { return kappa * delta - 1.0; }

}  // namespace nearcrit
