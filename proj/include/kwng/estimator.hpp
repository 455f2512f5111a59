#ifndef KWNG_ESTIMATOR_HPP
#define KWNG_ESTIMATOR_HPP

// Kernelized Wasserstein natural gradient with a Nystrom basis.
//
// Given N samples X_n = h_theta(Z_n), M basis points Y_m drawn from the
// samples and one coordinate index i_m per basis point, the estimator works
// with
//   C[m, n*d + i] = d_{i_m} d_{i+d} k(Y_m, X_n)          (M x Nd)
//   K[m, m']      = d_{i_m} d_{i_m' + d} k(Y_m, Y_m')     (M x M)
//   T             = (1/N) C B                             (M x q)
// where B stacks the d x q pushforward Jacobians. The raw estimate is
//   (1/eps) (D^-1 - D^-1 T^T (T D^-1 T^T + lambda eps K + (eps/N) C C^T)^+ T D^-1) g
// and equals (eps D + G)^-1 g with G = T^T (lambda K + C C^T / N)^+ T.

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kwng/error.hpp"
#include "kwng/kernels.hpp"
#include "kwng/model_spec.hpp"
#include "kwng/numerics.hpp"

namespace kwng {

enum class GradientKind { Euclidean, NaturalExact, NaturalKWNG };

struct GradientVector {
  Vector values;
  GradientKind kind = GradientKind::Euclidean;

  double norm() const { return values.norm(); }
};

enum class DampingMode { Identity, TCols, TTildeCols };

inline DampingMode parse_damping(const std::string& name) {
  if (name == "identity") return DampingMode::Identity;
  if (name == "tcols") return DampingMode::TCols;
  if (name == "ttildecols") return DampingMode::TTildeCols;
  throw Error(ErrorCode::InvalidArgument, "unknown damping mode '" + name + "'");
}

enum class EstimatorPath { Stable, Raw };

struct EstimatorConfig {
  double epsilon = 1e-5;
  double lambda = 0.0;
  DampingMode damping = DampingMode::TTildeCols;
  std::optional<double> pinv_rtol;  // unset: size * machine epsilon
  std::optional<double> clip_norm;
  double damping_floor = 1e-8;
  EstimatorPath path = EstimatorPath::Stable;
};

inline void validate(const EstimatorConfig& cfg) {
  check(cfg.epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
  check(cfg.lambda >= 0.0, ErrorCode::InvalidArgument, "lambda must be non-negative");
  check(cfg.damping_floor > 0.0, ErrorCode::InvalidArgument, "damping floor must be positive");
  if (cfg.clip_norm) check(*cfg.clip_norm > 0.0, ErrorCode::InvalidArgument, "clip norm must be positive");
}

struct NystromBasis {
  Matrix points;                   // d x M, one basis point per column
  std::vector<Eigen::Index> idx;   // sampled coordinate per basis point

  Eigen::Index size() const { return points.cols(); }
  Eigen::Index dim() const { return points.rows(); }
};

struct SampleBatch {
  Matrix z;  // latent, one column per sample
  Matrix x;  // d x N samples
  Matrix b;  // Nd x q, row block n is the Jacobian at Z_n

  Eigen::Index size() const { return x.cols(); }
  Eigen::Index dim() const { return x.rows(); }
};

inline SampleBatch draw_batch(const ModelSpec& model, const Vector& theta, Eigen::Index n, Rng& rng) {
  check(n >= 1, ErrorCode::EmptyBatch, "batch size must be positive");
  check(theta.size() == model.dim_q, ErrorCode::DimensionMismatch, "parameter length");
  const Eigen::Index d = model.dim_d;
  SampleBatch batch;
  batch.z.resize(model.dim_latent, n);
  batch.x.resize(d, n);
  batch.b.resize(n * d, model.dim_q);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector z = model.latent ? model.latent(rng) : standard_normal(rng, model.dim_latent);
    batch.z.col(i) = z;
    batch.x.col(i) = model.sample(theta, z);
    batch.b.middleRows(i * d, d) = model.jacobian(theta, z);
  }
  return batch;
}

/// Uniform with replacement over samples, uniform coordinate per basis point.
inline NystromBasis sample_basis(const Eigen::Ref<const Matrix>& x, Eigen::Index m, Rng& rng) {
  check(x.cols() >= 1, ErrorCode::EmptyBatch, "no samples to draw basis points from");
  check(m >= 1, ErrorCode::InvalidArgument, "basis size must be positive");
  std::uniform_int_distribution<Eigen::Index> pick(0, x.cols() - 1);
  std::uniform_int_distribution<Eigen::Index> coord(0, x.rows() - 1);
  NystromBasis basis;
  basis.points.resize(x.rows(), m);
  basis.idx.resize(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) {
    basis.points.col(j) = x.col(pick(rng));
    basis.idx[static_cast<std::size_t>(j)] = coord(rng);
  }
  return basis;
}

inline Matrix assemble_C(const NystromBasis& basis, const Eigen::Ref<const Matrix>& x, const KernelSpec& kernel,
                         double sigma) {
  check(basis.dim() == x.rows(), ErrorCode::DimensionMismatch, "basis and samples differ in dimension");
  check(sigma > 0.0, ErrorCode::InvalidArgument, "bandwidth must be positive");
  const Eigen::Index d = x.rows();
  const Eigen::Index n = x.cols();
  const Eigen::Index m = basis.size();
  Matrix c(m, n * d);
  Vector diff(d);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index r = 0; r < m; ++r) {
      diff = basis.points.col(r) - x.col(j);
      const RadialTerms t = radial_terms(kernel, sigma, diff.squaredNorm());
      const Eigen::Index im = basis.idx[static_cast<std::size_t>(r)];
      const double scale = -t.second * diff(im);
      for (Eigen::Index i = 0; i < d; ++i) c(r, j * d + i) = scale * diff(i);
      c(r, j * d + im) += t.first;
    }
  }
  require_finite(c, "assemble_C produced non-finite entries");
  return c;
}

inline Matrix assemble_K(const NystromBasis& basis, const KernelSpec& kernel, double sigma) {
  check(sigma > 0.0, ErrorCode::InvalidArgument, "bandwidth must be positive");
  const Eigen::Index m = basis.size();
  Matrix k(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const Eigen::Index ia = basis.idx[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b <= a; ++b) {
      const Eigen::Index ib = basis.idx[static_cast<std::size_t>(b)];
      const Vector diff = basis.points.col(a) - basis.points.col(b);
      const RadialTerms t = radial_terms(kernel, sigma, diff.squaredNorm());
      double v = -t.second * diff(ia) * diff(ib);
      if (ia == ib) v += t.first;
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

/// T = (1/N) C B, the Jacobian of tau(theta) with basis points held fixed.
inline Matrix assemble_T(const Eigen::Ref<const Matrix>& c, const SampleBatch& batch) {
  check(c.cols() == batch.b.rows(), ErrorCode::DimensionMismatch, "C and B are not conformable");
  return c * batch.b / static_cast<double>(batch.size());
}

struct Damping {
  Vector values;
  bool fell_back = false;  // every column was zero; identity used instead
};

/// Identity or column-norm damping, each norm lifted to floor * max norm.
inline Damping damping_vector(DampingMode mode, const Eigen::Ref<const Matrix>& t, double floor) {
  const Eigen::Index q = t.cols();
  if (mode == DampingMode::Identity) return {Vector::Ones(q), false};
  Vector norms = t.colwise().norm().transpose();
  const double top = q > 0 ? norms.maxCoeff() : 0.0;
  if (!(top > 0.0)) return {Vector::Ones(q), true};
  norms = norms.cwiseMax(floor * top);
  return {norms, false};
}

inline double resolve_rtol(const std::optional<double>& rtol, Eigen::Index size) {
  return rtol ? *rtol : default_rtol(size, size);
}

inline void check_kwng_inputs(const Eigen::Ref<const Matrix>& t, const Eigen::Ref<const Vector>& d, double epsilon,
                              const Eigen::Ref<const Vector>& euclid) {
  check(epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
  check(t.cols() == d.size() && d.size() == euclid.size(), ErrorCode::DimensionMismatch,
        "T, D and gradient are not conformable");
  check((d.array() > 0.0).all(), ErrorCode::InvalidArgument, "damping must be positive");
  require_finite(euclid, "euclidean gradient");
}

/// Upper-triangular F (M x M) with F^T F = lambda K + C C^T / N, taken from a
/// QR factorization of [C^T / sqrt(N); sqrt(lambda) K^{1/2}] so that C C^T is
/// never formed.
inline Matrix regularizer_factor(const Eigen::Ref<const Matrix>& c, const Eigen::Ref<const Matrix>& k,
                                 double lambda, Eigen::Index n) {
  const Eigen::Index m = c.rows();
  const bool ridge = lambda > 0.0;
  Matrix stacked(c.cols() + (ridge ? m : 0), m);
  stacked.topRows(c.cols()) = c.transpose() / std::sqrt(static_cast<double>(n));
  if (ridge) {
    check(k.rows() == m && k.cols() == m, ErrorCode::DimensionMismatch, "K and C");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (k + k.transpose()));
    const Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    stacked.bottomRows(m) = std::sqrt(lambda) * roots.asDiagonal() * eig.eigenvectors().transpose();
  }
  if (stacked.rows() < m) {
    stacked.conservativeResize(m, Eigen::NoChange);
    stacked.bottomRows(m - c.cols()).setZero();
  }
  Eigen::HouseholderQR<Matrix> qr(stacked);
  return qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
}

/// Raw estimator. With W = D^{-1/2} T^T and Z = [W; sqrt(eps) F] the
/// pseudo-inverted matrix is Z^T Z, so the bracket equals I - U_W U_W^T where
/// U_W holds the W rows of the left singular vectors of Z. It is evaluated as
/// U_c U_c^T from the complementary singular vectors, which keeps full
/// relative accuracy when eps is small against T D^-1 T^T. rtol cuts the
/// singular values of Z.
inline GradientVector kwng_raw(const Eigen::Ref<const Matrix>& c, const Eigen::Ref<const Matrix>& k,
                               const Eigen::Ref<const Matrix>& t, const Eigen::Ref<const Vector>& d, double epsilon,
                               double lambda, Eigen::Index n, const Eigen::Ref<const Vector>& euclid,
                               std::optional<double> rtol = {}) {
  check_kwng_inputs(t, d, epsilon, euclid);
  check(c.rows() == t.rows(), ErrorCode::DimensionMismatch, "C and T");
  const Eigen::Index m = t.rows();
  const Eigen::Index q = t.cols();
  const Vector dinv_root = d.cwiseSqrt().cwiseInverse();
  if (m == 0) return {dinv_root.cwiseAbs2().cwiseProduct(euclid) / epsilon, GradientKind::NaturalKWNG};

  Matrix z(q + m, m);
  z.topRows(q) = dinv_root.asDiagonal() * t.transpose();
  z.bottomRows(m) = std::sqrt(epsilon) * regularizer_factor(c, k, lambda, n);
  Eigen::JacobiSVD<Matrix> svd(z, Eigen::ComputeFullU);
  const Vector& sv = svd.singularValues();
  const double cut = resolve_rtol(rtol, m) * (sv.size() > 0 ? sv(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > cut) ++rank;
  const Matrix uc = svd.matrixU().topRows(q).rightCols(q + m - rank);
  const Vector scaled = dinv_root.cwiseProduct(euclid);
  GradientVector out{dinv_root.cwiseProduct(uc * (uc.transpose() * scaled)) / epsilon, GradientKind::NaturalKWNG};
  require_finite(out.values, "kwng_raw result");
  return out;
}

/// Whitened system of the ridgeless estimator: with C C^T = U S U^T restricted
/// to its numerical rank r, T~ = S_r^{-1/2} U_r^T T (r x q).
struct StableReduction {
  Matrix t_tilde;
  Eigen::Index rank = 0;
};

inline StableReduction stable_reduction(const Eigen::Ref<const Matrix>& gram, const Eigen::Ref<const Matrix>& t,
                                        std::optional<double> rtol = {}) {
  check(gram.rows() == t.rows(), ErrorCode::DimensionMismatch, "C C^T and T");
  const SvdFactors f = svd_sym(gram, resolve_rtol(rtol, gram.rows()));
  StableReduction out;
  out.rank = f.rank;
  const Vector inv_root = f.s.head(f.rank).cwiseSqrt().cwiseInverse();
  out.t_tilde = inv_root.asDiagonal() * (f.u.leftCols(f.rank).transpose() * t);
  return out;
}

/// Ridgeless estimate from the whitened system:
/// (1/eps) (D^-1 - D^-1 T~^T (T~ D^-1 T~^T + (eps/N) P)^+ T~ D^-1) g,
/// where P is the identity on the retained rank.
///
/// With W = T~ D^{-1/2} = U diag(s) V^T the pseudo-inverted matrix is
/// U diag(s^2 + eps/N) U^T, and the bracket collapses to
/// D^{-1/2} V diag(f) V^T D^{-1/2} with f_i = 1 / (N s_i^2 + eps), or 1/eps for
/// directions the pseudo-inverse truncates. Evaluating the filter factors
/// directly avoids the cancellation in D^-1 g - (...) as eps -> 0.
inline GradientVector kwng_stable_reduced(const StableReduction& red, const Eigen::Ref<const Vector>& d,
                                          double epsilon, Eigen::Index n, const Eigen::Ref<const Vector>& euclid,
                                          std::optional<double> rtol = {}) {
  check_kwng_inputs(red.t_tilde, d, epsilon, euclid);
  const Vector dinv_root = d.cwiseSqrt().cwiseInverse();
  const Matrix w = red.t_tilde * dinv_root.asDiagonal();
  const double shift = epsilon / static_cast<double>(n);
  const double nn = static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(w.transpose() * w);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "kwng_stable eigensolver");
  const Vector s2 = eig.eigenvalues().cwiseMax(0.0);
  const double top = (s2.size() > 0 ? s2.maxCoeff() : 0.0) + shift;
  const double cut = resolve_rtol(rtol, std::max<Eigen::Index>(red.t_tilde.rows(), 1)) * top;
  Vector filter(s2.size());
  for (Eigen::Index i = 0; i < s2.size(); ++i) {
    filter(i) = (s2(i) + shift > cut) ? 1.0 / (nn * s2(i) + epsilon) : 1.0 / epsilon;
  }
  const Matrix& v = eig.eigenvectors();
  const Vector scaled = dinv_root.cwiseProduct(euclid);
  GradientVector out{dinv_root.cwiseProduct(v * filter.cwiseProduct(v.transpose() * scaled)),
                     GradientKind::NaturalKWNG};
  require_finite(out.values, "kwng_stable result");
  return out;
}

struct StableResult {
  GradientVector gradient;
  Matrix t_tilde;
  Eigen::Index rank = 0;
};

inline StableResult kwng_stable(const Eigen::Ref<const Matrix>& c, const Eigen::Ref<const Matrix>& t,
                                const Eigen::Ref<const Vector>& d, double epsilon, Eigen::Index n,
                                std::optional<double> rtol, const Eigen::Ref<const Vector>& euclid) {
  check(c.rows() == t.rows(), ErrorCode::DimensionMismatch, "C and T");
  StableReduction red = stable_reduction(c * c.transpose(), t, rtol);
  GradientVector g = kwng_stable_reduced(red, d, epsilon, n, euclid, rtol);
  return {std::move(g), std::move(red.t_tilde), red.rank};
}

/// Independent route to the raw estimate. The Nystrom objective
///   (1/N) sum_n |grad f(X_n)|^2 + lambda |f|_H^2 + (1/eps) |D^{-1/2}(g + T^T alpha)|^2
/// is a linear least-squares problem in alpha; it is solved with a complete
/// orthogonal decomposition and the estimate (1/eps) D^-1 (g + T^T alpha*) is
/// rebuilt from the minimizer.
inline GradientVector kwng_oracle_quadratic(const Eigen::Ref<const Matrix>& c, const Eigen::Ref<const Matrix>& k,
                                            const Eigen::Ref<const Matrix>& t, const Eigen::Ref<const Vector>& d,
                                            double epsilon, double lambda, Eigen::Index n,
                                            const Eigen::Ref<const Vector>& euclid) {
  check_kwng_inputs(t, d, epsilon, euclid);
  const Vector dinv = d.cwiseInverse();
  const Eigen::Index m = t.rows();
  const Eigen::Index q = t.cols();
  if (m == 0) return {dinv.cwiseProduct(euclid) / epsilon, GradientKind::NaturalKWNG};
  check(c.rows() == m, ErrorCode::DimensionMismatch, "C and T");

  const bool ridge = lambda > 0.0;
  const Eigen::Index rows = c.cols() + (ridge ? m : 0) + q;
  Matrix a = Matrix::Zero(rows, m);
  Vector rhs = Vector::Zero(rows);
  a.topRows(c.cols()) = c.transpose() / std::sqrt(static_cast<double>(n));
  Eigen::Index offset = c.cols();
  if (ridge) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (k + k.transpose()));
    const Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    a.middleRows(offset, m) = std::sqrt(lambda) * roots.asDiagonal() * eig.eigenvectors().transpose();
    offset += m;
  }
  const Vector w = (epsilon * d).cwiseSqrt().cwiseInverse();
  a.bottomRows(q) = w.asDiagonal() * t.transpose();
  rhs.tail(q) = -w.cwiseProduct(euclid);

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  const Vector alpha = cod.solve(rhs);
  GradientVector out{dinv.cwiseProduct(euclid + t.transpose() * alpha) / epsilon, GradientKind::NaturalKWNG};
  require_finite(out.values, "oracle result");
  return out;
}

/// (eps D + G)^-1 g with G = T^T (lambda K + C C^T / N)^+ T. The pseudo-inverse
/// is split as R^+ = V V^T, V = U_r S_r^{-1/2}, and the system is solved in the
/// augmented form [eps D, H^T; H, -I] [x; y] = [g; 0] with H = V^T T, which
/// avoids forming G next to the much smaller eps D.
inline GradientVector kwng_representation(const Eigen::Ref<const Matrix>& c, const Eigen::Ref<const Matrix>& k,
                                          const Eigen::Ref<const Matrix>& t, const Eigen::Ref<const Vector>& d,
                                          double epsilon, double lambda, Eigen::Index n,
                                          const Eigen::Ref<const Vector>& euclid, std::optional<double> rtol = {}) {
  check_kwng_inputs(t, d, epsilon, euclid);
  Matrix inner = c * c.transpose() / static_cast<double>(n);
  if (lambda > 0.0) inner += lambda * k;
  const SvdFactors f = svd_sym(inner, resolve_rtol(rtol, inner.rows()));
  const Matrix h = f.s.head(f.rank).cwiseSqrt().cwiseInverse().asDiagonal() * (f.u.leftCols(f.rank).transpose() * t);
  const Eigen::Index q = t.cols();
  const Eigen::Index r = f.rank;
  Matrix system = Matrix::Zero(q + r, q + r);
  system.topLeftCorner(q, q).diagonal() = epsilon * d;
  system.topRightCorner(q, r) = h.transpose();
  system.bottomLeftCorner(r, q) = h;
  system.bottomRightCorner(r, r).diagonal().setConstant(-1.0);
  Vector rhs = Vector::Zero(q + r);
  rhs.head(q) = euclid;
  GradientVector out{system.partialPivLu().solve(rhs).head(q), GradientKind::NaturalKWNG};
  require_finite(out.values, "representation result");
  return out;
}

inline GradientVector clip_by_norm(const GradientVector& g, double max_norm) {
  check(max_norm > 0.0, ErrorCode::InvalidArgument, "clip norm must be positive");
  const double norm = g.values.norm();
  if (norm <= max_norm) return g;
  return {g.values * (max_norm / norm), g.kind};
}

struct EstimateDetails {
  GradientVector gradient;
  double sigma = 0.0;
  Eigen::Index rank = 0;
  bool damping_fell_back = false;
  Vector damping;
};

/// Full pipeline: batch, basis, bandwidth, assembly, damping, estimate.
inline EstimateDetails estimate_detailed(const ModelSpec& model, const Vector& theta, const KernelSpec& kernel,
                                         const EstimatorConfig& cfg, Eigen::Index n, Eigen::Index m, Rng& rng,
                                         const Eigen::Ref<const Vector>& euclid) {
  validate(cfg);
  validate(kernel);
  check(euclid.size() == model.dim_q, ErrorCode::DimensionMismatch, "gradient length");
  const SampleBatch batch = draw_batch(model, theta, n, rng);
  const NystromBasis basis = sample_basis(batch.x, m, rng);

  EstimateDetails out;
  out.sigma = resolve_bandwidth(kernel, batch.x, basis.points);
  const Matrix c = assemble_C(basis, batch.x, kernel, out.sigma);
  const Matrix t = assemble_T(c, batch);
  Matrix gram(m, m);
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(c);
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();

  const bool stable = cfg.path == EstimatorPath::Stable;
  Matrix k;
  if (cfg.lambda > 0.0) k = assemble_K(basis, kernel, out.sigma);
  std::optional<StableReduction> red;
  if (stable || cfg.damping == DampingMode::TTildeCols) {
    // A positive lambda whitens C C^T + N lambda K instead of C C^T, which
    // reproduces the raw estimator's lambda eps K term.
    red = cfg.lambda > 0.0 ? stable_reduction(gram + static_cast<double>(n) * cfg.lambda * k, t, cfg.pinv_rtol)
                           : stable_reduction(gram, t, cfg.pinv_rtol);
  }

  const Matrix& damping_source = cfg.damping == DampingMode::TTildeCols ? red->t_tilde : t;
  const Damping damp = damping_vector(cfg.damping, damping_source, cfg.damping_floor);
  out.damping_fell_back = damp.fell_back;
  out.damping = damp.values;

  if (stable) {
    out.gradient = kwng_stable_reduced(*red, damp.values, cfg.epsilon, n, euclid, cfg.pinv_rtol);
    out.rank = red->rank;
  } else {
    out.gradient = kwng_raw(c, k, t, damp.values, cfg.epsilon, cfg.lambda, n, euclid, cfg.pinv_rtol);
    out.rank = red ? red->rank : svd_sym(gram).rank;
  }
  if (cfg.clip_norm) out.gradient = clip_by_norm(out.gradient, *cfg.clip_norm);
  return out;
}

inline GradientVector estimate(const ModelSpec& model, const Vector& theta, const KernelSpec& kernel,
                               const EstimatorConfig& cfg, Eigen::Index n, Eigen::Index m, Rng& rng,
                               const Eigen::Ref<const Vector>& euclid) {
  return estimate_detailed(model, theta, kernel, cfg, n, m, rng, euclid).gradient;
}

}  // namespace kwng

#endif  // KWNG_ESTIMATOR_HPP
