#ifndef KWNG_NUMERICS_HPP
#define KWNG_NUMERICS_HPP

// Dense linear-algebra substrate. Everything here is a pure function of its
// inputs; symmetric problems go through a self-adjoint eigendecomposition.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "kwng/error.hpp"

namespace kwng {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Eigen::Ref<const Matrix>& a) { return a.allFinite(); }

inline void require_finite(const Eigen::Ref<const Matrix>& a, const char* what) {
  if (!a.allFinite()) throw Error(ErrorCode::NonFinite, what);
}

inline void require_square(const Eigen::Ref<const Matrix>& a, const char* what) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::DimensionMismatch, what);
}

/// Default relative cutoff for pseudo-inverses: size times machine epsilon.
inline double default_rtol(Eigen::Index rows, Eigen::Index cols) {
  return static_cast<double>(std::max<Eigen::Index>({rows, cols, 1})) *
         std::numeric_limits<double>::epsilon();
}

struct SvdFactors {
  Matrix u;         // orthogonal, columns ordered like s
  Vector s;         // non-negative, descending
  Eigen::Index rank = 0;
};

/// Spectral factorization A = U diag(S) U^T of a symmetric PSD matrix.
/// Eigenvalues that come out slightly negative through round-off are clamped
/// to zero; rank counts values strictly above rtol * max(S).
inline SvdFactors svd_sym(const Eigen::Ref<const Matrix>& a, double rtol) {
  require_square(a, "svd_sym expects a square matrix");
  require_finite(a, "svd_sym input");
  SvdFactors out;
  const Eigen::Index n = a.rows();
  if (n == 0) {
    out.u = Matrix(0, 0);
    out.s = Vector(0);
    return out;
  }
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "svd_sym eigensolver");
  // Eigen returns ascending eigenvalues; flip to descending.
  out.u = eig.eigenvectors().rowwise().reverse();
  out.s = eig.eigenvalues().reverse().cwiseMax(0.0);
  const double smax = out.s.size() > 0 ? out.s(0) : 0.0;
  const double cut = rtol * smax;
  out.rank = 0;
  if (smax > 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (out.s(i) > cut) ++out.rank;
    }
  }
  return out;
}

inline SvdFactors svd_sym(const Eigen::Ref<const Matrix>& a) {
  return svd_sym(a, default_rtol(a.rows(), a.cols()));
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix; eigenvalues at or
/// below rtol * max are treated as zero.
inline Matrix pinv_psd(const Eigen::Ref<const Matrix>& a, double rtol) {
  const SvdFactors f = svd_sym(a, rtol);
  const Eigen::Index r = f.rank;
  if (r == 0) return Matrix::Zero(a.rows(), a.cols());
  const Matrix ur = f.u.leftCols(r);
  const Vector inv = f.s.head(r).cwiseInverse();
  return ur * inv.asDiagonal() * ur.transpose();
}

inline Matrix pinv_psd(const Eigen::Ref<const Matrix>& a) {
  return pinv_psd(a, default_rtol(a.rows(), a.cols()));
}

/// Floor used to decide strict positive definiteness: 1e-12 * trace / d.
inline double default_eig_floor(const Eigen::Ref<const Matrix>& sigma) {
  const double d = static_cast<double>(std::max<Eigen::Index>(sigma.rows(), 1));
  return 1e-12 * std::abs(sigma.trace()) / d;
}

/// Eigendecomposition of an SPD matrix, ascending eigenvalues. Throws
/// SingularSigma when the smallest eigenvalue is not above the floor.
struct SpdEigen {
  Matrix vectors;
  Vector values;
};

inline SpdEigen spd_eigen(const Eigen::Ref<const Matrix>& sigma, double eig_floor) {
  require_square(sigma, "expected a square matrix");
  require_finite(sigma, "SPD input");
  const Matrix sym = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "spd eigensolver");
  if (sym.rows() == 0 || !(eig.eigenvalues()(0) > eig_floor)) {
    throw Error(ErrorCode::SingularSigma, "matrix is not strictly positive definite");
  }
  return {eig.eigenvectors(), eig.eigenvalues()};
}

inline SpdEigen spd_eigen(const Eigen::Ref<const Matrix>& sigma) {
  return spd_eigen(sigma, default_eig_floor(sigma));
}

/// Solves A Sigma + Sigma A = S given the eigendecomposition of Sigma.
inline Matrix lyapunov_solve(const SpdEigen& sigma, const Eigen::Ref<const Matrix>& s) {
  const Eigen::Index d = sigma.values.size();
  if (s.rows() != d || s.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "lyapunov_solve: S must match Sigma");
  }
  require_finite(s, "lyapunov_solve right-hand side");
  const Matrix& v = sigma.vectors;
  Matrix st = v.transpose() * s * v;
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      st(a, b) /= sigma.values(a) + sigma.values(b);
    }
  }
  Matrix out = v * st * v.transpose();
  return 0.5 * (out + out.transpose());
}

/// Symmetric solution A of A Sigma + Sigma A = S for SPD Sigma.
inline Matrix lyapunov_solve(const Eigen::Ref<const Matrix>& sigma, const Eigen::Ref<const Matrix>& s,
                             double eig_floor) {
  return lyapunov_solve(spd_eigen(sigma, eig_floor), s);
}

inline Matrix lyapunov_solve(const Eigen::Ref<const Matrix>& sigma, const Eigen::Ref<const Matrix>& s) {
  return lyapunov_solve(sigma, s, default_eig_floor(sigma));
}

struct PcaResult {
  Vector mean;
  Matrix basis;          // q x 2, orthonormal columns
  Vector variances;      // top-2 eigenvalues of the centered covariance
  Eigen::Index rank = 0; // numerical rank of the covariance
  bool degenerate = false;
};

/// Top-2 principal directions of a point cloud (one point per column).
/// A covariance of rank < 2 is flagged; the missing directions are completed
/// with an arbitrary orthonormal set.
inline PcaResult pca_top2(const Eigen::Ref<const Matrix>& points) {
  const Eigen::Index q = points.rows();
  const Eigen::Index n = points.cols();
  check(n >= 3, ErrorCode::InvalidArgument, "pca_top2 needs at least 3 points");
  check(q >= 2, ErrorCode::InvalidArgument, "pca_top2 needs points of dimension >= 2");
  require_finite(points, "pca_top2 input");

  PcaResult out;
  out.mean = points.rowwise().mean();
  const Matrix centered = points.colwise() - out.mean;
  const Matrix cov = centered * centered.transpose() / static_cast<double>(n - 1);
  const double scale = std::max(cov.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  const SvdFactors f = svd_sym(cov, 1e-10);
  out.rank = (f.s(0) > 1e-13 * scale) ? f.rank : 0;
  out.variances = f.s.head(2);
  out.basis = f.u.leftCols(2);
  out.degenerate = out.rank < 2;
  if (out.degenerate) {
    // Keep the meaningful leading direction (if any), then Gram-Schmidt the
    // canonical axes to complete an orthonormal pair.
    Matrix basis = Matrix::Zero(q, 2);
    Eigen::Index filled = 0;
    if (out.rank == 1) basis.col(filled++) = f.u.col(0);
    for (Eigen::Index axis = 0; axis < q && filled < 2; ++axis) {
      Vector e = Vector::Unit(q, axis);
      for (Eigen::Index j = 0; j < filled; ++j) e -= basis.col(j).dot(e) * basis.col(j);
      const double norm = e.norm();
      if (norm > 1e-6) basis.col(filled++) = e / norm;
    }
    out.basis = basis;
  }
  return out;
}

/// Symmetric PSD square root via eigendecomposition.
inline Matrix sym_sqrt(const SpdEigen& e) {
  return e.vectors * e.values.cwiseSqrt().asDiagonal() * e.vectors.transpose();
}

inline double median_of(std::vector<double> values) {
  check(!values.empty(), ErrorCode::EmptySet, "median of empty set");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace kwng

#endif  // KWNG_NUMERICS_HPP
