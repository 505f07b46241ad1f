#pragma once

// Perron-Frobenius analysis of a nonnegative primitive mean matrix.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>

#include "nearcrit/core.hpp"

namespace nearcrit {

/// Perron data of a primitive matrix. `M` is the matrix the data was computed
/// for; `eig` is the Perron root of the matrix originally passed in (before
/// any normalization), so for the output of normalize_to_critical() `M` has
/// Perron root 1 while `eig` records the factor that was divided out.
struct SpectralData {
  Matrix M;
  RowVector ell;  // left Perron vector, ell * r == 1
  Vector r;       // right Perron vector, |r|_1 == d
  double eig = 1.0;
  int primitivity_power = 1;
  double rho = 0.0;  // spectral radius of M / (Perron root of M) - r*ell

  Eigen::Index dim() const { return r.size(); }
  Matrix rank_one() const { return r * ell; }
};

namespace detail {

inline void require_square_nonneg(const Matrix& M) {
  if (M.rows() == 0 || M.rows() != M.cols()) {
    throw InvalidArgument("matrix must be square with d >= 1, got " + std::to_string(M.rows()) +
                          "x" + std::to_string(M.cols()));
  }
  if (!M.allFinite()) throw InvalidArgument("matrix has non-finite entries");
  if ((M.array() < 0.0).any()) throw InvalidArgument("matrix has negative entries");
}

inline double spectral_radius(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  if (A.rows() == 1) return std::abs(A(0, 0));
  Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Wielandt's bound: a primitive d x d matrix has M^k > 0 for some k <= this.
inline int wielandt_bound(Eigen::Index d) {
  return static_cast<int>(std::max<Eigen::Index>(1, d * d - 2 * d + 2));
}

/// Smallest k <= k_max with M^k entrywise positive. Works on the zero pattern
/// only, so large powers cannot overflow or underflow.
inline int check_primitive(const Matrix& M, std::optional<int> k_max = std::nullopt) {
  detail::require_square_nonneg(M);
  const int limit = k_max.value_or(wielandt_bound(M.rows()));
  if (limit < 1) throw InvalidArgument("k_max must be >= 1");

  using Pattern = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
  const Pattern base = (M.array() > 0.0).cast<int>();
  Pattern power = base;
  for (int k = 1; k <= limit; ++k) {
    if ((power.array() > 0).all()) return k;
    power = ((power * base).array() > 0).cast<int>();
  }
  throw NotPrimitiveWithin("no power M^k with k <= " + std::to_string(limit) +
                           " is entrywise positive");
}

struct PowerIterationOptions {
  int max_iterations = 100000;
  double tolerance = 1e-12;  // relative residual |Av - eig v|_inf / (eig |v|_inf)
};

namespace detail {

// Power iteration for the Perron vector of a primitive matrix A, starting from
// the all-ones vector. Returns the vector normalized to |v|_1 == 1.
inline Vector perron_vector(const Matrix& A, const PowerIterationOptions& opt, const char* side) {
  const Eigen::Index d = A.rows();
  Vector v = Vector::Constant(d, 1.0 / static_cast<double>(d));
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vector w = A * v;
    const double eig = w.sum();  // |Av|_1 / |v|_1 for positive v
    if (!(eig > 0.0) || !std::isfinite(eig)) {
      throw ConvergenceFailure(std::string(side) + " power iteration produced a non-positive iterate");
    }
    const double residual = (w - eig * v).cwiseAbs().maxCoeff() / (eig * v.cwiseAbs().maxCoeff());
    v = w / eig;
    if (residual <= opt.tolerance) return v;
  }
  throw ConvergenceFailure(std::string(side) + " power iteration did not reach residual " +
                           std::to_string(opt.tolerance) + " within " +
                           std::to_string(opt.max_iterations) + " iterations");
}

}  // namespace detail

/// Perron root and positive left/right eigenvectors, scaled so that
/// ell * r == 1 and |r|_1 == d.
inline SpectralData perron_decompose(const Matrix& M, const PowerIterationOptions& opt = {}) {
  const int k = check_primitive(M);
  const Eigen::Index d = M.rows();

  Vector r = detail::perron_vector(M, opt, "right");
  Vector l = detail::perron_vector(M.transpose(), opt, "left");

  r *= static_cast<double>(d) / r.sum();
  RowVector ell = l.transpose();
  ell /= ell.dot(r.transpose());

  SpectralData sd;
  sd.M = M;
  sd.ell = std::move(ell);
  sd.r = std::move(r);
  sd.eig = (sd.ell * M * sd.r)(0, 0) / sd.ell.dot(sd.r.transpose());
  sd.primitivity_power = k;
  sd.rho = detail::spectral_radius(M / sd.eig - sd.rank_one());
  if (!((sd.ell.array() > 0.0).all() && (sd.r.array() > 0.0).all())) {
    throw ConvergenceFailure("Perron vectors are not strictly positive");
  }
  if (!(sd.rho < 1.0)) {
    throw ConvergenceFailure("spectral radius of M - r*ell is not below 1 (rho = " +
                             std::to_string(sd.rho) + ")");
  }
  return sd;
}

/// M / eig together with its Perron data (same eigenvectors, Perron root 1).
inline std::pair<Matrix, SpectralData> normalize_to_critical(const Matrix& M,
                                                          const PowerIterationOptions& opt = {}) {
  SpectralData sd = perron_decompose(M, opt);
  Matrix critical = M / sd.eig;
  sd.M = critical;
  return {std::move(critical), std::move(sd)};
}

/// Residuals of the Perron identities for (sd.M, ell, r). Used by callers that
/// need to confirm the data is normalized to Perron root 1.
struct PerronResiduals {
  double left = 0.0;       // |ell M - ell|_inf
  double right = 0.0;      // |M r - r|_inf
  double pairing = 0.0;    // |ell r - 1|
  double idempotence = 0.0;  // |(r ell)^2 - r ell|_inf (max entry)
};

inline PerronResiduals perron_residuals(const SpectralData& sd) {
  PerronResiduals res;
  res.left = (sd.ell * sd.M - sd.ell).cwiseAbs().maxCoeff();
  res.right = (sd.M * sd.r - sd.r).cwiseAbs().maxCoeff();
  res.pairing = std::abs(sd.ell.dot(sd.r.transpose()) - 1.0);
  const Matrix P = sd.rank_one();
  res.idempotence = (P * P - P).cwiseAbs().maxCoeff();
  return res;
}

inline bool is_critical(const SpectralData& sd, double tol = 1e-10) {
  const PerronResiduals res = perron_residuals(sd);
  return res.left < tol && res.right < tol;
}

struct Projection {
  Vector hat;    // (ell x) r, on the Perron ray
  Vector check;  // x - hat, satisfies ell * check == 0
};

/// x = hat + check with hat = r ell x. `check` is formed as x - hat, so
/// hat + check returns x up to one rounding per coordinate.
inline Projection project(const Vector& x, const SpectralData& sd) {
  if (x.size() != sd.dim()) {
    throw InvalidArgument("state has dimension " + std::to_string(x.size()) + ", expected " +
                          std::to_string(sd.dim()));
  }
  Projection p;
  p.hat = sd.ell.dot(x.transpose()) * sd.r;
  p.check = x - p.hat;
  return p;
}

inline double ell_dot(const SpectralData& sd, const Vector& x) { return sd.ell.dot(x.transpose()); }

}  // namespace nearcrit
