#pragma once

// A weighted Euclidean norm |x|_W = |W x|_2 in which M - r*ell is a strict
// contraction, plus the l1 norm used for the two-dimensional counterexample,
// and the cone constant lambda of |check(x)| <= lambda * ell x on the orthant.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "nearcrit/core.hpp"
#include "nearcrit/spectral.hpp"

namespace nearcrit {

/// Basis W with |||A||| := |W A W^-1|_2. Immutable once built.
struct NormBasis {
  Matrix W;
  Matrix W_inv;
  double rho_certified = 0.0;  // |||M - r ell|||, computed by SVD
  double epsilon_used = 0.0;
  double spectral_radius = 0.0;  // of M - r ell
  double scaling = 1.0;          // the accepted Schur scaling parameter t
  double condition_number = 1.0;

  Eigen::Index dim() const { return W.rows(); }
};

namespace detail {

inline double largest_singular_value(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  if ((A.array() == 0.0).all()) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(A);
  return svd.singularValues()(0);
}

inline double condition_number(const Matrix& A) {
  Eigen::JacobiSVD<Matrix> svd(A);
  const auto& s = svd.singularValues();
  return s(0) / s(s.size() - 1);
}

struct SchurStructure {
  Matrix Q;      // orthogonal, A = Q T Q^T
  Matrix S;      // block diagonal, normalizes the 2x2 blocks of T
  Matrix S_inv;
  std::vector<int> block_of;  // block index of each coordinate
};

// Real Schur form of A with each 2x2 diagonal block (a complex pair mu +- i nu)
// conjugated to the normal form [[mu, nu], [-nu, mu]], whose 2-norm equals the
// modulus of the pair.
inline SchurStructure schur_structure(const Matrix& A) {
  const Eigen::Index d = A.rows();
  Eigen::RealSchur<Matrix> schur(A);
  SchurStructure out;
  out.Q = schur.matrixU();
  const Matrix& T = schur.matrixT();
  out.S = Matrix::Identity(d, d);
  out.S_inv = Matrix::Identity(d, d);
  out.block_of.assign(static_cast<std::size_t>(d), 0);

  int block = 0;
  for (Eigen::Index i = 0; i < d; ++block) {
    const bool pair = i + 1 < d && T(i + 1, i) != 0.0;
    if (!pair) {
      out.block_of[static_cast<std::size_t>(i)] = block;
      ++i;
      continue;
    }
    const Eigen::Matrix2d B = T.block<2, 2>(i, i);
    Eigen::EigenSolver<Eigen::Matrix2d> es(B);
    // eigenvector p + i q for mu + i nu gives B [p q] = [p q] [[mu, nu], [-nu, mu]]
    const Eigen::Vector2cd v = es.eigenvectors().col(0);
    Eigen::Matrix2d P;
    P.col(0) = v.real();
    P.col(1) = v.imag();
    out.S.block<2, 2>(i, i) = P;
    out.S_inv.block<2, 2>(i, i) = P.inverse();
    out.block_of[static_cast<std::size_t>(i)] = block;
    out.block_of[static_cast<std::size_t>(i + 1)] = block;
    i += 2;
  }
  return out;
}

}  // namespace detail

struct ContractionSearch {
  int max_steps = 200;
  double shrink = 0.5;
};

/// Builds W = D_t^-1 S^-1 Q^T from the real Schur form of M - r ell, where
/// D_t = diag(t^block). Shrinking t damps the strictly upper part of the
/// quasi-triangular factor; the first t whose certified norm is within
/// `epsilon` of the spectral radius (and below 1) is accepted.
/// Default epsilon is (1 - spectral radius) / 2.
inline NormBasis build_contraction_norm(const SpectralData& sd,
                                        std::optional<double> epsilon = std::nullopt,
                                        const ContractionSearch& search = {}) {
  const Eigen::Index d = sd.dim();
  const Matrix A = sd.M - sd.rank_one();
  const double radius = detail::spectral_radius(A);
  if (!(radius < 1.0)) {
    throw SpectralRadiusNotLessThanOne("spectral radius of M - r*ell is " + std::to_string(radius) +
                                       "; data is not a critical primitive decomposition");
  }
  const double eps = epsilon.value_or((1.0 - radius) / 2.0);
  if (!(eps > 0.0)) throw InvalidArgument("epsilon must be > 0");
  const double target = radius + eps;

  NormBasis nb;
  nb.epsilon_used = eps;
  nb.spectral_radius = radius;

  if ((A.array() == 0.0).all()) {
    nb.W = Matrix::Identity(d, d);
    nb.W_inv = Matrix::Identity(d, d);
    nb.rho_certified = 0.0;
    return nb;
  }

  const detail::SchurStructure st = detail::schur_structure(A);
  double t = 1.0;
  for (int step = 0; step < search.max_steps; ++step, t *= search.shrink) {
    Vector D(d), D_inv(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const int b = st.block_of[static_cast<std::size_t>(i)];
      D(i) = std::pow(t, b);
      D_inv(i) = std::pow(t, -b);
    }
    Matrix W = D_inv.asDiagonal() * st.S_inv * st.Q.transpose();
    Matrix W_inv = st.Q * st.S * D.asDiagonal();
    const double certified = detail::largest_singular_value(W * A * W_inv);
    if (certified <= target && certified < 1.0) {
      nb.W = std::move(W);
      nb.W_inv = std::move(W_inv);
      nb.rho_certified = certified;
      nb.scaling = t;
      nb.condition_number = detail::condition_number(nb.W);
      return nb;
    }
  }
  throw SlackTooSmall("no Schur scaling within " + std::to_string(search.max_steps) +
                      " steps certified |||M - r ell||| <= " + std::to_string(target) +
                      "; increase epsilon");
}

/// Induced norm |W A W^-1|_2.
inline double operator_norm(const NormBasis& nb, const Matrix& A) {
  return detail::largest_singular_value(nb.W * A * nb.W_inv);
}

inline double vector_norm(const NormBasis& nb, const Vector& x) { return (nb.W * x).norm(); }

/// A vector norm handle: either the contraction norm |W x|_2 or plain l1.
class Norm {
 public:
  enum class Kind { l1, weighted };

  static Norm l1() { return Norm(); }
  static Norm weighted(NormBasis nb) {
    Norm n;
    n.kind_ = Kind::weighted;
    n.basis_ = std::move(nb);
    return n;
  }

  Kind kind() const { return kind_; }
  const char* name() const { return kind_ == Kind::l1 ? "l1" : "weighted"; }
  const NormBasis* basis() const { return basis_ ? &*basis_ : nullptr; }

  double operator()(const Vector& x) const {
    return kind_ == Kind::l1 ? x.lpNorm<1>() : vector_norm(*basis_, x);
  }

  /// Norm of the linear map x -> A x induced by this vector norm.
  double induced(const Matrix& A) const {
    return kind_ == Kind::l1 ? A.cwiseAbs().colwise().sum().maxCoeff() : operator_norm(*basis_, A);
  }

 private:
  Kind kind_ = Kind::l1;
  std::optional<NormBasis> basis_;
};

struct ConeConstant {
  double lambda = 0.0;
  int attaining_vertex = 0;  // zero-based index i of the vertex e_i / ell_i
};

/// lambda = max_i |(I - r ell) e_i| / ell_i. The map x -> |check(x)| is convex
/// and positively homogeneous, so its maximum over the simplex
/// {x >= 0, ell x = 1} sits at one of the vertices e_i / ell_i.
inline ConeConstant cone_constant(const SpectralData& sd, const Norm& norm) {
  const Eigen::Index d = sd.dim();
  ConeConstant cc;
  for (Eigen::Index i = 0; i < d; ++i) {
    const Vector e = Vector::Unit(d, i);
    const double value = norm(project(e, sd).check) / sd.ell(i);
    if (value > cc.lambda) {
      cc.lambda = value;
      cc.attaining_vertex = static_cast<int>(i);
    }
  }
  return cc;
}

/// Constants with lower * |x|_1 <= |x| <= upper * |x|_1.
struct NormEquivalence {
  double lower = 0.0;          // certified: sigma_min(W) / sqrt(d) for the W-norm
  double upper = 0.0;          // exact: max over the l1 vertices +-e_i
  double sampled_lower = 0.0;  // min over sampled points of the unit l1 sphere
};

inline NormEquivalence norm_equivalence(const Norm& norm, Eigen::Index d, Rng& rng,
                                        int n_samples = 10000) {
  NormEquivalence eq;
  for (Eigen::Index i = 0; i < d; ++i) eq.upper = std::max(eq.upper, norm(Vector::Unit(d, i)));
  if (norm.kind() == Norm::Kind::l1) {
    eq.lower = 1.0;
  } else {
    Eigen::JacobiSVD<Matrix> svd(norm.basis()->W);
    eq.lower = svd.singularValues()(d - 1) / std::sqrt(static_cast<double>(d));
  }
  eq.sampled_lower = eq.upper;
  Vector x(d);
  for (int k = 0; k < n_samples; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) x(i) = 2.0 * rng.uniform() - 1.0;
    const double l1 = x.lpNorm<1>();
    if (l1 == 0.0) continue;
    eq.sampled_lower = std::min(eq.sampled_lower, norm(x / l1));
  }
  return eq;
}

}  // namespace nearcrit
