#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "wbc/error.hpp"

namespace wbc::spd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Symmetric, not necessarily positive-definite (tangent vectors).
using SymMatrix = Matrix;
/// Symmetric positive-definite (manifold points).
using SpdMatrix = Matrix;
/// upper()-vectorized tangent vector of length n(n+1)/2.
using TangentVector = Vector;

inline constexpr double kSymmetryTolerance = 1e-12;
inline constexpr double kMinEigenvalue = 1e-12;

inline bool is_symmetric(const Matrix& m) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
      const double tol = kSymmetryTolerance * std::max(1.0, std::abs(m(i, j)));
      if (!(std::abs(m(i, j) - m(j, i)) <= tol)) return false;
    }
  }
  return true;
}

inline void require_symmetric(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorKind::NonSymmetric, "matrix is not square");
  }
  if (!is_symmetric(m)) throw Error(ErrorKind::NonSymmetric, "matrix is not symmetric");
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline void require_same_dimension(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::DimensionMismatch,
                "dimension " + std::to_string(a.rows()) + " vs " + std::to_string(b.rows()));
  }
}

/// U diag(values) U^T with values sorted descending and each eigenvector's
/// largest-magnitude entry made positive.
struct EigenPair {
  Matrix vectors;
  Vector values;

  template <typename F>
  Matrix apply(F&& fn) const {
    Vector mapped(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) mapped(i) = fn(values(i));
    return vectors * mapped.asDiagonal() * vectors.transpose();
  }
};

namespace detail {

/// Input must already be exactly symmetric.
inline EigenPair eig_symmetric(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::NonSymmetric, "eigendecomposition failed");
  }
  const Eigen::Index n = m.rows();
  EigenPair out{Matrix(n, n), Vector(n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = n - 1 - k;
    out.values(k) = solver.eigenvalues()(src);
    Vector v = solver.eigenvectors().col(src);
    Eigen::Index peak = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
      if (std::abs(v(i)) > std::abs(v(peak))) peak = i;
    }
    if (v(peak) < 0.0) v = -v;
    out.vectors.col(k) = v;
  }
  return out;
}

inline void require_positive(const EigenPair& eig) {
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (!(eig.values(i) > kMinEigenvalue)) {
      throw Error(ErrorKind::NotPositiveDefinite,
                  "eigenvalue " + std::to_string(eig.values(i)) + " is not above " +
                      std::to_string(kMinEigenvalue));
    }
  }
}

inline EigenPair eig_spd(const Matrix& p) {
  require_symmetric(p);
  EigenPair eig = eig_symmetric(symmetrize(p));
  require_positive(eig);
  return eig;
}

struct Roots {
  Matrix sqrt;
  Matrix inv_sqrt;
};

inline Roots roots(const Matrix& p) {
  const EigenPair eig = eig_spd(p);
  return {eig.apply([](double s) { return std::sqrt(s); }),
          eig.apply([](double s) { return 1.0 / std::sqrt(s); })};
}

/// log(A B A) for symmetric A and SPD B, symmetrizing the product first.
inline Matrix log_of_congruence(const Matrix& a, const Matrix& b) {
  const EigenPair eig = eig_symmetric(symmetrize(a * b * a));
  require_positive(eig);
  return eig.apply([](double s) { return std::log(s); });
}

}  // namespace detail

inline EigenPair sym_eig(const SymMatrix& p) {
  require_symmetric(p);
  return detail::eig_symmetric(symmetrize(p));
}

inline SpdMatrix spd_exp(const SymMatrix& s) {
  return sym_eig(s).apply([](double v) { return std::exp(v); });
}

inline SymMatrix spd_log(const SpdMatrix& p) {
  return detail::eig_spd(p).apply([](double v) { return std::log(v); });
}

/// P^exponent through the eigendecomposition.
inline SpdMatrix spd_pow(const SpdMatrix& p, double exponent) {
  return detail::eig_spd(p).apply([exponent](double v) { return std::pow(v, exponent); });
}

/// Tr(S1 P^-1 S2 P^-1).
inline double metric_inner(const SymMatrix& s1, const SymMatrix& s2, const SpdMatrix& p) {
  require_same_dimension(s1, p);
  require_same_dimension(s2, p);
  const Matrix p_inv = spd_pow(p, -1.0);
  return (s1 * p_inv * s2 * p_inv).trace();
}

inline double metric_norm(const SymMatrix& s, const SpdMatrix& p) {
  return std::sqrt(std::max(metric_inner(s, s, p), 0.0));
}

/// sqrt(sum log^2 lambda_i) over the eigenvalues of P1^-1 P2, taken from the
/// congruent symmetric form P1^-1/2 P2 P1^-1/2.
inline double riemann_distance(const SpdMatrix& p1, const SpdMatrix& p2) {
  require_same_dimension(p1, p2);
  require_symmetric(p2);
  const Matrix inv_sqrt = detail::roots(p1).inv_sqrt;
  const EigenPair eig = detail::eig_symmetric(symmetrize(inv_sqrt * p2 * inv_sqrt));
  detail::require_positive(eig);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    const double l = std::log(eig.values(i));
    sum += l * l;
  }
  return std::sqrt(sum);
}

/// P^1/2 exp(P^-1/2 S P^-1/2) P^1/2.
inline SpdMatrix exp_map(const SpdMatrix& p, const SymMatrix& s) {
  require_same_dimension(p, s);
  require_symmetric(s);
  const auto r = detail::roots(p);
  const Matrix inner = detail::eig_symmetric(symmetrize(r.inv_sqrt * s * r.inv_sqrt))
                           .apply([](double v) { return std::exp(v); });
  return symmetrize(r.sqrt * inner * r.sqrt);
}

/// P^1/2 log(P^-1/2 Pi P^-1/2) P^1/2.
inline SymMatrix log_map(const SpdMatrix& p, const SpdMatrix& pi) {
  require_same_dimension(p, pi);
  require_symmetric(pi);
  const auto r = detail::roots(p);
  return symmetrize(r.sqrt * detail::log_of_congruence(r.inv_sqrt, pi) * r.sqrt);
}

inline Eigen::Index tangent_dimension(Eigen::Index n) { return n * (n + 1) / 2; }

/// Row-major upper triangle; off-diagonal entries weighted by sqrt(2) so the
/// Euclidean norm equals the Frobenius norm of S.
inline TangentVector upper_vec(const SymMatrix& s) {
  require_symmetric(s);
  const Eigen::Index n = s.rows();
  TangentVector v(tangent_dimension(n));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    v(k++) = s(i, i);
    for (Eigen::Index j = i + 1; j < n; ++j) v(k++) = std::numbers::sqrt2 * s(i, j);
  }
  return v;
}

inline SymMatrix unupper_vec(const TangentVector& v, Eigen::Index n) {
  if (n < 1 || v.size() != tangent_dimension(n)) {
    throw Error(ErrorKind::LengthMismatch, "vector of length " + std::to_string(v.size()) +
                                               " does not match n = " + std::to_string(n));
  }
  SymMatrix s(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    s(i, i) = v(k++);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      s(i, j) = v(k++) / std::numbers::sqrt2;
      s(j, i) = s(i, j);
    }
  }
  return s;
}

/// upper(log(P^-1/2 Pi P^-1/2)): whitened tangent coordinates of Pi at P.
inline TangentVector tangent_coords(const SpdMatrix& p, const SpdMatrix& pi) {
  require_same_dimension(p, pi);
  require_symmetric(pi);
  return upper_vec(detail::log_of_congruence(detail::roots(p).inv_sqrt, pi));
}

/// Tangent coordinates of many points at a shared base point.
inline std::vector<TangentVector> tangent_coords(const SpdMatrix& p,
                                                 std::span<const SpdMatrix> points) {
  const Matrix inv_sqrt = detail::roots(p).inv_sqrt;
  std::vector<TangentVector> out;
  out.reserve(points.size());
  for (const auto& pi : points) {
    require_same_dimension(p, pi);
    require_symmetric(pi);
    out.push_back(upper_vec(detail::log_of_congruence(inv_sqrt, pi)));
  }
  return out;
}

inline SymMatrix euclidean_mean(std::span<const SymMatrix> points) {
  if (points.empty()) throw Error(ErrorKind::EmptyInput, "mean of an empty set");
  Matrix sum = Matrix::Zero(points.front().rows(), points.front().cols());
  for (const auto& p : points) {
    require_same_dimension(points.front(), p);
    sum += p;
  }
  return sum / static_cast<double>(points.size());
}

struct MeanOptions {
  double eps = 1e-8;
  int max_iters = 50;
};

struct MeanResult {
  SpdMatrix mean;
  /// Fixed-point updates applied to reach `mean`.
  int iterations = 0;
  bool converged = false;
  /// Stopping statistic ||sum_k log(P_k^-1 M)||_F at every visited iterate.
  std::vector<double> statistic;
};

/// Fréchet mean under the affine-invariant metric by the fixed-point update
///   M <- M^1/2 exp[(1/K) sum_k log(M^-1/2 P_k M^-1/2)] M^1/2
/// started from the arithmetic mean. Iteration stops once
/// ||sum_k log(P_k^-1 M)||_F <= eps; if max_iters runs out first, the iterate
/// with the smallest statistic is returned with converged = false.
///
/// The statistic is evaluated through the similarity
///   sum_k log(P_k^-1 M) = -M^-1/2 [sum_k log(M^-1/2 P_k M^-1/2)] M^1/2,
/// which reuses the symmetric sum needed by the update.
inline MeanResult riemannian_mean(std::span<const SpdMatrix> points, const MeanOptions& options = {}) {
  if (points.empty()) throw Error(ErrorKind::EmptyInput, "mean of an empty set");
  for (const auto& p : points) {
    require_same_dimension(points.front(), p);
    require_symmetric(p);
  }
  const auto count = static_cast<double>(points.size());
  const Eigen::Index n = points.front().rows();

  MeanResult result;
  Matrix current = symmetrize(euclidean_mean(points));
  Matrix best = current;
  double best_stat = std::numeric_limits<double>::infinity();

  while (true) {
    const auto r = detail::roots(current);
    Matrix gradient = Matrix::Zero(n, n);
    for (const auto& p : points) gradient += detail::log_of_congruence(r.inv_sqrt, p);
    const double stat = (r.inv_sqrt * gradient * r.sqrt).norm();
    result.statistic.push_back(stat);
    if (stat < best_stat) {
      best_stat = stat;
      best = current;
    }
    if (stat <= options.eps) {
      result.converged = true;
      break;
    }
    if (result.iterations >= options.max_iters) break;
    const Matrix step = detail::eig_symmetric(symmetrize(gradient / count))
                            .apply([](double v) { return std::exp(v); });
    current = symmetrize(r.sqrt * step * r.sqrt);
    ++result.iterations;
  }
  result.mean = result.converged ? current : best;
  return result;
}

}  // namespace wbc::spd
