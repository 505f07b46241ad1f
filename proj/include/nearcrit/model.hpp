#pragma once

// Process specifications X' = M X + g(X) + xi on the positive orthant and the
// built-in families.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nearcrit/core.hpp"
#include "nearcrit/expression.hpp"
#include "nearcrit/geometry.hpp"
#include "nearcrit/spectral.hpp"

namespace nearcrit {

using StateFunction = std::function<double(const Vector&)>;
using DriftFunction = std::function<Vector(const Vector&)>;
using NoiseFunction = std::function<Vector(const Vector&, Rng&)>;
using ScalarFunction = std::function<double(double)>;

/// A process specification. Every member function is reentrant; the
/// randomness comes only from the Rng passed to `noise`.
///
/// Contract for shipped families: E[ell xi] = 0 and E[(ell xi)^2] = sigma^2
/// exactly, |xi| <= c_moment^(1/p) sigma in `moment_norm`, g >= 0, and the
/// orthant is invariant.
struct ModelSpec {
  std::string name;
  SpectralData sd;  // normalized to Perron root 1
  DriftFunction g;
  StateFunction sigma;
  NoiseFunction noise;
  double p = 3.0;
  // Largest delta for which the moment bound holds; infinite for bounded noise.
  double delta_max = std::numeric_limits<double>::infinity();
  double c_moment = 1.0;
  Norm moment_norm = Norm::l1();
  std::function<bool(const Vector&)> absorbing;  // may be empty
  // sigma along the ray as a function of t = ell x, when the family has one
  ScalarFunction sigma_bar;

  Eigen::Index dim() const { return sd.dim(); }
  const Matrix& M() const { return sd.M; }
};

/// Orthant predicate (the state guard).
inline bool in_orthant(const Vector& x) { return (x.array() >= 0.0).all() && x.allFinite(); }

// ---------------------------------------------------------------------------
// Noise-scale profiles
// ---------------------------------------------------------------------------

/// sigma_bar(t) as a function of t = ell x.
struct SigmaProfile {
  enum class Kind { power, log_decay, custom };
  Kind kind = Kind::power;
  double exponent = 0.5;  // power: scale * t^exponent
  double kappa = 1.0;     // log_decay: scale * t / (2 + log(1 + t))^kappa
  double scale = 1.0;
  ScalarFunction custom;
  std::string label;

  static SigmaProfile power(double exponent, double scale = 1.0) {
    SigmaProfile p;
    p.kind = Kind::power;
    p.exponent = exponent;
    p.scale = scale;
    return p;
  }
  static SigmaProfile log_decay(double kappa, double scale = 1.0) {
    SigmaProfile p;
    p.kind = Kind::log_decay;
    p.kappa = kappa;
    p.scale = scale;
    return p;
  }
  static SigmaProfile from_function(ScalarFunction f, std::string label) {
    SigmaProfile p;
    p.kind = Kind::custom;
    p.custom = std::move(f);
    p.label = std::move(label);
    return p;
  }

  double operator()(double t) const {
    if (t <= 0.0) return 0.0;
    switch (kind) {
      case Kind::power:
        return scale * std::pow(t, exponent);
      case Kind::log_decay:
        return scale * t / std::pow(2.0 + std::log1p(t), kappa);
      case Kind::custom:
        return custom(t);
    }
    return 0.0;
  }
};

/// Throws ProfileViolatesSmallO unless sigma_bar(t)/t is nonincreasing on
/// t = 10^1 .. 10^8 and strictly smaller at the right end.
inline void require_small_o(const ScalarFunction& sigma_bar) {
  double previous = std::numeric_limits<double>::infinity();
  double first = 0.0;
  for (int k = 1; k <= 8; ++k) {
    const double t = std::pow(10.0, k);
    const double ratio = sigma_bar(t) / t;
    if (!std::isfinite(ratio) || ratio < 0.0) {
      throw ProfileViolatesSmallO("sigma_bar(t)/t is not a finite nonnegative number at t = " +
                                  std::to_string(t));
    }
    if (k == 1) first = ratio;
    if (ratio > previous * (1.0 + 1e-12)) {
      throw ProfileViolatesSmallO("sigma_bar(t)/t increases at t = " + std::to_string(t));
    }
    previous = ratio;
  }
  if (!(previous < first)) throw ProfileViolatesSmallO("sigma_bar(t)/t does not decay");
}

// ---------------------------------------------------------------------------
// Two-point families
// ---------------------------------------------------------------------------

namespace detail {

// Unit transverse direction w with ell w = 0, scaled so max_i |w_i| / r_i = 1.
inline Vector transverse_direction(const SpectralData& sd) {
  const Eigen::Index d = sd.dim();
  if (d < 2) return Vector::Zero(d);
  Vector w = project(Vector::Unit(d, 0), sd).check;
  const double scale = (w.array().abs() / sd.r.array()).maxCoeff();
  return scale > 0.0 ? Vector(w / scale) : Vector::Zero(d);
}

// Largest s with M x - s (r + a |w|) >= 0, i.e. the noise amplitude the
// orthant can absorb at x.
inline double orthant_cap(const SpectralData& sd, const Vector& x, const Vector& w, double a) {
  const Vector mx = sd.M * x;
  const Vector reach = sd.r + a * w.cwiseAbs();
  return (mx.array() / reach.array()).minCoeff();
}

}  // namespace detail

/// sigma(x) = min(sigma_raw(x), orthant cap), noise
///   xi = sigma(x) (s1 r + a s2 w),  s1, s2 independent signs,
/// with w the transverse direction (ell w = 0); s2 is drawn only when a > 0.
/// `drift` receives the state and its sigma and returns g(x) >= 0.
struct TwoPointFamily {
  std::string name;
  StateFunction sigma_raw;
  ScalarFunction sigma_bar;  // sigma_raw along the ray, if the family has one
  std::function<Vector(const Vector&, double)> drift;
  double transverse = 0.0;
};

inline ModelSpec make_two_point_model(const SpectralData& sd, TwoPointFamily family) {
  if (!is_critical(sd)) throw InvalidArgument("spectral data is not normalized to Perron root 1");
  if (!(family.transverse >= 0.0)) throw InvalidArgument("transverse amplitude must be >= 0");
  const Vector w = detail::transverse_direction(sd);
  const double a = sd.dim() >= 2 ? family.transverse : 0.0;

  ModelSpec m;
  m.name = family.name;
  m.sd = sd;
  m.sigma_bar = family.sigma_bar;

  auto sigma_raw = family.sigma_raw;
  m.sigma = [sd, w, a, sigma_raw](const Vector& x) {
    if (!(ell_dot(sd, x) > 0.0)) return 0.0;
    return std::max(0.0, std::min(sigma_raw(x), detail::orthant_cap(sd, x, w, a)));
  };
  auto sigma = m.sigma;
  auto drift = family.drift;
  m.g = [sigma, drift](const Vector& x) { return drift(x, sigma(x)); };
  m.noise = [sigma, sd, w, a](const Vector& x, Rng& rng) {
    const double s = sigma(x);
    Vector xi = (s * rng.sign()) * sd.r;
    if (a > 0.0) xi += (s * a * rng.sign()) * w;
    return xi;
  };
  // |xi|_1 <= sigma (|r|_1 + a |w|_1)
  m.moment_norm = Norm::l1();
  m.c_moment = std::pow(sd.r.lpNorm<1>() + a * w.lpNorm<1>(), m.p);
  m.absorbing = [sd](const Vector& x) { return !(ell_dot(sd, x) > 0.0); };
  return m;
}

/// g(x) = theta sigma^2(x) / (2 ell x) r, so that ell x * ell g(x) = theta/2 sigma^2(x):
/// theta < 1 is the recurrent side of the dichotomy, theta > 1 the transient one.
inline ModelSpec make_lamperti_model(const SpectralData& sd, double theta, const SigmaProfile& profile,
                                     double transverse = 0.5) {
  if (!(theta >= 0.0)) throw InvalidArgument("theta must be >= 0");
  ScalarFunction sigma_bar = [profile](double t) { return profile(t); };
  require_small_o(sigma_bar);

  TwoPointFamily fam;
  fam.name = "lamperti";
  fam.sigma_bar = sigma_bar;
  fam.sigma_raw = [sd, sigma_bar](const Vector& x) { return sigma_bar(ell_dot(sd, x)); };
  fam.transverse = transverse;
  fam.drift = [sd, theta](const Vector& x, double sigma) -> Vector {
    const double t = ell_dot(sd, x);
    if (!(t > 0.0) || theta == 0.0) return Vector::Zero(x.size());
    return (theta * sigma * sigma / (2.0 * t)) * sd.r;
  };
  ModelSpec m = make_two_point_model(sd, std::move(fam));

  // construction-time probes: ray points and vertex rays at several scales
  const Vector w = detail::transverse_direction(sd);
  const double a = sd.dim() >= 2 ? transverse : 0.0;
  for (double t : {1.0, 10.0, 1e3, 1e6}) {
    std::vector<Vector> probes{t * sd.r};
    for (Eigen::Index i = 0; i < sd.dim(); ++i) probes.push_back(Vector::Unit(sd.dim(), i) * (t / sd.ell(i)));
    for (const Vector& x : probes) {
      const Vector base = sd.M * x + m.g(x);
      const Vector worst = base - m.sigma(x) * (sd.r + a * w.cwiseAbs());
      if ((worst.array() < -1e-12 * base.cwiseAbs().maxCoeff()).any()) {
        throw OrthantViolation("lamperti model leaves the orthant from a probe state");
      }
    }
  }
  return m;
}

/// User-defined two-point model: g(x) = g_expr(x) r (or componentwise when
/// `g_components` has d entries) and sigma_bar(x) = sigma_expr(x).
inline ModelSpec make_custom_model(const SpectralData& sd, const std::vector<std::string>& g_components,
                                   const std::string& sigma_expr, double transverse = 0.5) {
  const Eigen::Index d = sd.dim();
  if (g_components.size() != 1 && g_components.size() != static_cast<std::size_t>(d)) {
    throw InvalidArgument("custom drift needs 1 (multiple of r) or d component expressions");
  }
  std::vector<Expression> g_exprs;
  for (const auto& src : g_components) g_exprs.push_back(Expression::parse(src, d));
  const Expression sig = Expression::parse(sigma_expr, d);

  TwoPointFamily fam;
  fam.name = "custom";
  fam.transverse = transverse;
  fam.sigma_raw = [sig, sd](const Vector& x) { return sig(ExprContext{ell_dot(sd, x), &x}); };
  fam.sigma_bar = [sig, sd](double t) {
    const Vector x = t * sd.r;
    return sig(ExprContext{t, &x});
  };
  fam.drift = [g_exprs, sd](const Vector& x, double) -> Vector {
    const ExprContext ctx{ell_dot(sd, x), &x};
    Vector g(x.size());
    if (g_exprs.size() == 1) {
      g = g_exprs[0](ctx) * sd.r;
    } else {
      for (Eigen::Index i = 0; i < x.size(); ++i) g(i) = g_exprs[static_cast<std::size_t>(i)](ctx);
    }
    if (!((g.array() >= 0.0).all() && g.allFinite())) {
      throw OrthantViolation("custom drift g(x) has a negative or non-finite component");
    }
    return g;
  };
  return make_two_point_model(sd, std::move(fam));
}

// ---------------------------------------------------------------------------
// The two-dimensional counterexample
// ---------------------------------------------------------------------------

/// Scalar functions driving the counterexample chain.
struct CounterexampleParams {
  ScalarFunction sigma_bar;
  ScalarFunction g_bar;
  ScalarFunction sigma_bar_prime;  // optional; central differences when empty
  double theta = 0.75;

  /// sigma_bar(t) = t / (2 + log(1 + t)), g_bar(t) = theta sigma_bar(t)^2 / t.
  static CounterexampleParams defaults(double theta = 0.75) {
    CounterexampleParams p;
    p.theta = theta;
    p.sigma_bar = [](double t) { return t / (2.0 + std::log1p(t)); };
    p.sigma_bar_prime = [](double t) {
      const double L = 2.0 + std::log1p(t);
      return (L - t / (1.0 + t)) / (L * L);
    };
    p.g_bar = [theta](double t) {
      const double s = t / (2.0 + std::log1p(t));
      return t > 0.0 ? theta * s * s / t : 0.0;
    };
    return p;
  }

  double derivative(double t) const {
    if (sigma_bar_prime) return sigma_bar_prime(t);
    const double h = 1e-6 * std::max(1.0, t);
    return (sigma_bar(t + h) - sigma_bar(t - h)) / (2.0 * h);
  }
};

/// Checks 0 < g_bar <= sigma_bar <= t/2 and |sigma_bar'| < 1/2 on a log grid
/// over [t_min, t_max], and that the per-decade sup of |sigma_bar'| strictly
/// decreases over the upper half of the grid (a proxy for sigma_bar' -> 0).
inline void validate_counterexample_params(const CounterexampleParams& p, double t_min = 1.0,
                                           double t_max = 1e8, int per_decade = 50) {
  if (!p.sigma_bar || !p.g_bar) throw InvalidArgument("counterexample params need sigma_bar and g_bar");
  const double decades = std::log10(t_max / t_min);
  const int n = std::max(2, static_cast<int>(std::ceil(decades * per_decade)) + 1);
  std::vector<double> decade_sup(static_cast<std::size_t>(std::ceil(decades)) + 1, 0.0);
  for (int k = 0; k < n; ++k) {
    const double t = t_min * std::pow(10.0, decades * k / (n - 1));
    const double s = p.sigma_bar(t), g = p.g_bar(t), ds = p.derivative(t);
    auto fail = [&](const std::string& what) {
      throw ParamContractViolation(what + " at t = " + std::to_string(t));
    };
    if (!(g > 0.0)) fail("g_bar(t) <= 0");
    if (!(g <= s)) fail("g_bar(t) > sigma_bar(t)");
    if (!(s <= t / 2.0)) fail("sigma_bar(t) > t/2");
    if (!(std::abs(ds) < 0.5)) fail("|sigma_bar'(t)| >= 1/2");
    const auto bucket = static_cast<std::size_t>(std::min<double>(
        std::floor(std::log10(t / t_min)), static_cast<double>(decade_sup.size() - 1)));
    decade_sup[bucket] = std::max(decade_sup[bucket], std::abs(ds));
  }
  const std::size_t full = static_cast<std::size_t>(std::floor(decades));
  for (std::size_t b = full / 2 + 1; b < full; ++b) {
    if (!(decade_sup[b] < decade_sup[b - 1] * (1.0 - 1e-9))) {
      throw ParamContractViolation("sup |sigma_bar'| does not decrease in decade " + std::to_string(b) +
                                   "; sigma_bar' does not tend to 0");
    }
  }
}

inline Matrix counterexample_matrix() {
  Matrix M(2, 2);
  M << 0.5, 0.5, 0.5, 0.5;
  return M;
}

/// The counterexample chain in state coordinates:
///   sigma(x) = sigma_bar(ell x), band(x) = |check(x)|_1 <= sigma(x),
///   g(x) = band ? g_bar(ell x) r : 0,
///   xi = sigma(x) chi + sigma(x) zeta 1{band},
/// chi = +-(1,1), zeta = +-(1,-1). Both signs are drawn every step (chi
/// first) so that other representations can share the stream. States with
/// ell x below the smallest normal double count as the absorbing origin.
inline ModelSpec make_counterexample_model(const CounterexampleParams& params) {
  validate_counterexample_params(params);
  const SpectralData sd = perron_decompose(counterexample_matrix());

  ModelSpec m;
  m.name = "counterexample";
  m.sd = sd;
  m.sigma_bar = params.sigma_bar;
  auto sigma_bar = params.sigma_bar;
  auto g_bar = params.g_bar;
  m.sigma = [sd, sigma_bar](const Vector& x) { return sigma_bar(ell_dot(sd, x)); };
  auto sigma = m.sigma;
  auto band = [sd, sigma](const Vector& x) { return project(x, sd).check.lpNorm<1>() <= sigma(x); };
  m.g = [sd, band, g_bar](const Vector& x) -> Vector {
    if (!band(x)) return Vector::Zero(2);
    return g_bar(ell_dot(sd, x)) * sd.r;
  };
  m.noise = [sigma, band](const Vector& x, Rng& rng) -> Vector {
    const double s = sigma(x);
    const double chi = rng.sign();
    const double zeta = rng.sign();
    Vector xi(2);
    xi << s * chi, s * chi;
    if (band(x)) {
      xi(0) += s * zeta;
      xi(1) -= s * zeta;
    }
    return xi;
  };
  m.moment_norm = Norm::l1();
  m.c_moment = std::pow(4.0, m.p);  // |xi|_1 <= |sigma chi|_1 + |sigma zeta|_1 = 4 sigma
  m.absorbing = [sd](const Vector& x) { return !(ell_dot(sd, x) >= std::numeric_limits<double>::min()); };
  return m;
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

struct StepResult {
  Vector next;
  Vector g;
  Vector xi;
};

/// One transition M x + g(x) + xi; g is evaluated before the noise draw.
/// Rounding residue below 1e-12 relative is clipped to the orthant boundary;
/// anything larger throws OrthantViolation.
inline StepResult step_detailed(const ModelSpec& model, const Vector& x, Rng& rng) {
  const Eigen::Index d = model.dim();
  if (model.absorbing && model.absorbing(x)) return {x, Vector::Zero(d), Vector::Zero(d)};
  StepResult out;
  out.g = model.g(x);
  out.xi = model.noise(x, rng);
  const Vector mx = model.M() * x;
  out.next = mx + out.g + out.xi;
  const double scale = (mx + out.g).cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (out.next(i) < 0.0) {
      if (out.next(i) >= -1e-12 * scale) {
        out.next(i) = 0.0;
      } else {
        throw OrthantViolation("model '" + model.name + "' left the orthant (component " +
                               std::to_string(i) + " = " + std::to_string(out.next(i)) + ")");
      }
    }
  }
  if (!out.next.allFinite()) throw OrthantViolation("model '" + model.name + "' produced a non-finite state");
  return out;
}

inline Vector step(const ModelSpec& model, const Vector& x, Rng& rng) {
  return step_detailed(model, x, rng).next;
}

// ---------------------------------------------------------------------------
// Moment diagnostics
// ---------------------------------------------------------------------------

struct NoiseMomentsReport {
  Vector state;
  long n_samples = 0;
  double sigma = 0.0;
  double mean_ell_xi = 0.0;
  double mean_se = 0.0;
  double variance_ratio = 0.0;  // mean (ell xi)^2 / sigma^2
  double variance_ratio_se = 0.0;
  double p_moment_ratio = 0.0;  // mean |xi|^p / sigma^p
  double p_moment_ratio_se = 0.0;
  bool mean_flag = false;
  bool variance_flag = false;
  bool moment_flag = false;

  bool ok() const { return !(mean_flag || variance_flag || moment_flag); }
};

/// Sample moments of the noise at a fixed state. Flags: |mean| > 4 SE,
/// variance ratio outside 1 +- 4 SE, p-moment ratio above c_moment (1 + 4 SE).
/// SE-based bands have an absolute floor of 1e-9 so exact noise is not flagged.
inline NoiseMomentsReport noise_moments_check(const ModelSpec& model, const Vector& x, long n_samples,
                                              Rng& rng) {
  if (n_samples < 1000) throw InvalidArgument("noise_moments_check needs n_samples >= 1000");
  NoiseMomentsReport rep;
  rep.state = x;
  rep.n_samples = n_samples;
  rep.sigma = model.sigma(x);
  if (!(rep.sigma > 0.0)) throw DomainError("sigma(x) = 0; moment ratios undefined");

  double s1 = 0, s2 = 0, v1 = 0, v2 = 0, m1 = 0, m2 = 0;
  const double s2inv = 1.0 / (rep.sigma * rep.sigma);
  const double spinv = std::pow(rep.sigma, -model.p);
  for (long k = 0; k < n_samples; ++k) {
    const Vector xi = model.noise(x, rng);
    const double lxi = ell_dot(model.sd, xi);
    const double vr = lxi * lxi * s2inv;
    const double mr = std::pow(model.moment_norm(xi), model.p) * spinv;
    s1 += lxi;
    s2 += lxi * lxi;
    v1 += vr;
    v2 += vr * vr;
    m1 += mr;
    m2 += mr * mr;
  }
  const double n = static_cast<double>(n_samples);
  auto se = [n](double sum, double sumsq) {
    const double mean = sum / n;
    return std::sqrt(std::max(0.0, sumsq / n - mean * mean) / (n - 1.0));
  };
  rep.mean_ell_xi = s1 / n;
  rep.mean_se = se(s1, s2);
  rep.variance_ratio = v1 / n;
  rep.variance_ratio_se = se(v1, v2);
  rep.p_moment_ratio = m1 / n;
  rep.p_moment_ratio_se = se(m1, m2);

  const double floor = 1e-9;
  rep.mean_flag = std::abs(rep.mean_ell_xi) > std::max(4.0 * rep.mean_se, floor * rep.sigma);
  rep.variance_flag = std::abs(rep.variance_ratio - 1.0) > std::max(4.0 * rep.variance_ratio_se, floor);
  rep.moment_flag = rep.p_moment_ratio > model.c_moment * (1.0 + std::max(4.0 * rep.p_moment_ratio_se, floor));
  return rep;
}

}  // namespace nearcrit
