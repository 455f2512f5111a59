#ifndef KWNG_MODELS_HPP
#define KWNG_MODELS_HPP

// Synthetic implicit models with analytic parameter Jacobians and exact
// Wasserstein natural gradients:
//   gaussian   x = Sigma^{1/2} z + mu          theta = (mu, vech(Sigma))
//   lognormal  x = exp(Sigma^{1/2} z + mu)     theta = (mu, vech(Sigma))
//   sphere     x = c + r z / |z|               theta = (c, r)
//
// vech is the row-major lower triangle including the diagonal:
// (0,0), (1,0), (1,1), (2,0), (2,1), (2,2), ...

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <utility>

#include "kwng/error.hpp"
#include "kwng/model_spec.hpp"
#include "kwng/numerics.hpp"

namespace kwng {

inline Eigen::Index vech_size(Eigen::Index d) { return d * (d + 1) / 2; }

/// Inverse of vech_size; throws if n is not triangular.
inline Eigen::Index vech_dim(Eigen::Index n) {
  Eigen::Index d = 0;
  while (vech_size(d) < n) ++d;
  check(vech_size(d) == n, ErrorCode::DimensionMismatch, "vector length is not a triangular number");
  return d;
}

inline Vector vech(const Eigen::Ref<const Matrix>& m) {
  require_square(m, "vech expects a square matrix");
  const Eigen::Index d = m.rows();
  Vector out(vech_size(d));
  Eigen::Index k = 0;
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) out(k++) = m(a, b);
  }
  return out;
}

inline Matrix unvech(const Eigen::Ref<const Vector>& s) {
  const Eigen::Index d = vech_dim(s.size());
  Matrix out(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      out(a, b) = s(k);
      out(b, a) = s(k);
      ++k;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian

struct GaussianParams {
  Vector mu;
  Vector s;  // vech(Sigma)

  Eigen::Index dim() const { return mu.size(); }
  Matrix sigma() const { return unvech(s); }

  Vector theta() const {
    Vector out(mu.size() + s.size());
    out << mu, s;
    return out;
  }

  static GaussianParams from_theta(const Eigen::Ref<const Vector>& theta, Eigen::Index d) {
    check(theta.size() == d + vech_size(d), ErrorCode::DimensionMismatch, "gaussian parameter length");
    return {theta.head(d), theta.tail(vech_size(d))};
  }

  static GaussianParams from_moments(const Vector& mu, const Matrix& sigma) { return {mu, vech(sigma)}; }
};

using LogNormalParams = GaussianParams;

inline Eigen::Index gaussian_dim_q(Eigen::Index d) { return d + vech_size(d); }

inline bool is_positive_definite(const Eigen::Ref<const Matrix>& sigma) {
  if (!sigma.allFinite()) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sigma + sigma.transpose()), Eigen::EigenvaluesOnly);
  return eig.info() == Eigen::Success && sigma.rows() > 0 &&
         eig.eigenvalues()(0) > default_eig_floor(sigma);
}

/// Precomputed square-root geometry of Sigma: R = Sigma^{1/2} = V diag(r) V^T.
struct SqrtGeometry {
  Matrix vectors;
  Vector root_values;
  Matrix root;

  explicit SqrtGeometry(const Matrix& sigma) {
    const SpdEigen e = spd_eigen(sigma);
    vectors = e.vectors;
    root_values = e.values.cwiseSqrt();
    root = vectors * root_values.asDiagonal() * vectors.transpose();
  }
};

inline Vector gaussian_sample(const SqrtGeometry& g, const Vector& mu, const Eigen::Ref<const Vector>& z) {
  check(z.size() == mu.size(), ErrorCode::DimensionMismatch, "latent dimension");
  return g.root * z + mu;
}

inline Vector gaussian_sample(const GaussianParams& theta, const Eigen::Ref<const Vector>& z) {
  return gaussian_sample(SqrtGeometry(theta.sigma()), theta.mu, z);
}

/// d x q Jacobian of R z + mu. The covariance columns are dR z with dR the
/// solution of dSigma = dR R + R dR, solved in R's eigenbasis.
inline Matrix gaussian_jacobian(const SqrtGeometry& g, const Eigen::Ref<const Vector>& z) {
  const Eigen::Index d = g.root_values.size();
  check(z.size() == d, ErrorCode::DimensionMismatch, "latent dimension");
  Matrix out = Matrix::Zero(d, gaussian_dim_q(d));
  out.leftCols(d).setIdentity();

  // In the eigenbasis, V^T dSigma V = va vb^T + vb va^T (a != b) or va va^T,
  // where va = V^T e_a. With F_ij = 1 / (r_i + r_j) and w = V^T z, the column
  // is V [va o F(vb o w) + vb o F(va o w)].
  const Matrix& v = g.vectors;
  const Vector w = v.transpose() * z;
  Matrix f(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) f(i, j) = 1.0 / (g.root_values(i) + g.root_values(j));
  }
  const Matrix vt = v.transpose();  // column a is va
  const Matrix fw = f * (vt.array().colwise() * w.array()).matrix();
  Eigen::Index col = d;
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      Vector tilde = vt.col(a).cwiseProduct(fw.col(b));
      if (a != b) tilde += vt.col(b).cwiseProduct(fw.col(a));
      out.col(col++) = v * tilde;
    }
  }
  return out;
}

inline Matrix gaussian_jacobian(const GaussianParams& theta, const Eigen::Ref<const Vector>& z) {
  return gaussian_jacobian(SqrtGeometry(theta.sigma()), z);
}

/// Closed-form WNG: (grad_mu, vech(Sigma H + H Sigma)) with H = A + diag(A),
/// A = unvech(grad_s).
inline Vector gaussian_exact_wng(const GaussianParams& theta, const Eigen::Ref<const Vector>& euclid) {
  const Eigen::Index d = theta.dim();
  check(euclid.size() == gaussian_dim_q(d), ErrorCode::DimensionMismatch, "gradient length");
  const Matrix sigma = theta.sigma();
  spd_eigen(sigma);  // throws SingularSigma
  Matrix h = unvech(euclid.tail(vech_size(d)));
  h.diagonal() *= 2.0;
  Vector out(euclid.size());
  out << euclid.head(d), vech(sigma * h + h * sigma);
  return out;
}

/// Metric-vector product G_W(theta) u. With S_u = unvech(u_s) and A_u the
/// Lyapunov solution of S_u = A Sigma + Sigma A, the bilinear form is
/// v^T G u = m_v^T m_u + Tr(A_v Sigma A_u) = <A_u / 2, S_v>_F, so the
/// covariance block is vech(A_u) with its diagonal halved.
inline Vector gaussian_metric_apply(const GaussianParams& theta, const Eigen::Ref<const Vector>& u) {
  const Eigen::Index d = theta.dim();
  check(u.size() == gaussian_dim_q(d), ErrorCode::DimensionMismatch, "direction length");
  Matrix a = lyapunov_solve(theta.sigma(), unvech(u.tail(vech_size(d))));
  a.diagonal() *= 0.5;
  Vector out(u.size());
  out << u.head(d), vech(a);
  return out;
}

/// Squared 2-Wasserstein distance between two Gaussians and its Euclidean
/// gradient in (mu, vech(Sigma)) coordinates of the first argument.
/// d/dSigma = I - T with T = R^{-1} (R Sigma* R)^{1/2} R^{-1} the optimal map.
inline std::pair<double, Vector> bures_loss_and_grad(const GaussianParams& theta, const GaussianParams& target) {
  const Eigen::Index d = theta.dim();
  check(target.dim() == d, ErrorCode::DimensionMismatch, "target dimension");
  const Matrix sigma = theta.sigma();
  const Matrix sigma_t = target.sigma();
  const SqrtGeometry g(sigma);
  spd_eigen(sigma_t);

  const Matrix middle = g.root * sigma_t * g.root;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (middle + middle.transpose()));
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "bures eigensolver");
  const Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix middle_root = eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();

  const Vector dmu = theta.mu - target.mu;
  const double loss = dmu.squaredNorm() + sigma.trace() + sigma_t.trace() - 2.0 * roots.sum();

  const Vector inv_root_values = g.root_values.cwiseInverse();
  const Matrix root_inv = g.vectors * inv_root_values.asDiagonal() * g.vectors.transpose();
  Matrix transport = root_inv * middle_root * root_inv;
  transport = 0.5 * (transport + transport.transpose());
  Matrix dsigma = Matrix::Identity(d, d) - transport;
  // Off-diagonal vech coordinates move two symmetric entries at once.
  Matrix doubled = 2.0 * dsigma;
  doubled.diagonal() = dsigma.diagonal();

  Vector grad(gaussian_dim_q(d));
  grad << 2.0 * dmu, vech(doubled);
  return {std::max(loss, 0.0), grad};
}

inline ModelSpec make_gaussian_model(Eigen::Index d) {
  ModelSpec m;
  m.name = "gaussian";
  m.dim_d = d;
  m.dim_q = gaussian_dim_q(d);
  m.dim_latent = d;
  m.sample = [d](const Vector& theta, const Vector& z) {
    return gaussian_sample(GaussianParams::from_theta(theta, d), z);
  };
  m.jacobian = [d](const Vector& theta, const Vector& z) {
    return gaussian_jacobian(GaussianParams::from_theta(theta, d), z);
  };
  m.latent = [d](Rng& rng) { return standard_normal(rng, d); };
  m.exact_wng = [d](const Vector& theta, const Vector& euclid) {
    return gaussian_exact_wng(GaussianParams::from_theta(theta, d), euclid);
  };
  m.feasible = [d](const Vector& theta) {
    return is_positive_definite(GaussianParams::from_theta(theta, d).sigma());
  };
  return m;
}

// ---------------------------------------------------------------------------
// Log-normal

inline Vector lognormal_sample(const LogNormalParams& theta, const Eigen::Ref<const Vector>& z) {
  return gaussian_sample(theta, z).array().exp().matrix();
}

inline Matrix lognormal_jacobian(const LogNormalParams& theta, const Eigen::Ref<const Vector>& z) {
  const SqrtGeometry g(theta.sigma());
  const Vector x = gaussian_sample(g, theta.mu, z).array().exp().matrix();
  return x.asDiagonal() * gaussian_jacobian(g, z);
}

/// 2 x 2 Wasserstein information matrix of the 1-D log-normal in (mu, s = sigma^2).
/// In one dimension the monotone pushforward is the optimal map, so
/// G_ij = E_z[d_i x(z) d_j x(z)] with x(z) = exp(sqrt(s) z + mu).
inline Matrix lognormal_metric_1d(const LogNormalParams& theta, double tol = 1e-10) {
  check(theta.dim() == 1, ErrorCode::DimensionUnsupported, "log-normal oracle is one-dimensional");
  const double mu = theta.mu(0);
  const double s = theta.s(0);
  check(s > 0.0, ErrorCode::SingularSigma, "variance must be positive");
  const double root = std::sqrt(s);
  constexpr double inv_sqrt_2pi = 0.398942280401432677939946;
  const double inf = std::numeric_limits<double>::infinity();

  auto moment = [&](int power) {
    // density times x^2, with the exponents merged so the tails underflow to 0
    auto f = [&](double z) { return inv_sqrt_2pi * std::exp(-0.5 * z * z + 2.0 * (root * z + mu)) * std::pow(z, power); };
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -inf, inf, 15, tol, &err);
    return v;
  };
  const double e0 = moment(0);
  const double e1 = moment(1);
  const double e2 = moment(2);
  const double dxds = 0.5 / root;  // d x / d s = x z / (2 sqrt(s))
  Matrix g(2, 2);
  g(0, 0) = e0;
  g(0, 1) = g(1, 0) = e1 * dxds;
  g(1, 1) = e2 * dxds * dxds;
  return g;
}

inline Vector lognormal_exact_wng_1d(const LogNormalParams& theta, const Eigen::Ref<const Vector>& euclid) {
  check(theta.dim() == 1, ErrorCode::DimensionUnsupported, "log-normal oracle is one-dimensional");
  check(euclid.size() == 2, ErrorCode::DimensionMismatch, "gradient length");
  const Matrix g = lognormal_metric_1d(theta);
  return g.ldlt().solve(euclid);
}

inline ModelSpec make_lognormal_model(Eigen::Index d) {
  ModelSpec m;
  m.name = "lognormal";
  m.dim_d = d;
  m.dim_q = gaussian_dim_q(d);
  m.dim_latent = d;
  m.sample = [d](const Vector& theta, const Vector& z) {
    return lognormal_sample(LogNormalParams::from_theta(theta, d), z);
  };
  m.jacobian = [d](const Vector& theta, const Vector& z) {
    return lognormal_jacobian(LogNormalParams::from_theta(theta, d), z);
  };
  m.latent = [d](Rng& rng) { return standard_normal(rng, d); };
  if (d == 1) {
    m.exact_wng = [](const Vector& theta, const Vector& euclid) {
      return lognormal_exact_wng_1d(LogNormalParams::from_theta(theta, 1), euclid);
    };
  }
  m.feasible = [d](const Vector& theta) {
    return is_positive_definite(LogNormalParams::from_theta(theta, d).sigma());
  };
  return m;
}

// ---------------------------------------------------------------------------
// Uniform distribution on a hypersphere

struct SphereParams {
  Vector c;
  double r = 1.0;

  Vector theta() const {
    Vector out(c.size() + 1);
    out << c, r;
    return out;
  }

  static SphereParams from_theta(const Eigen::Ref<const Vector>& theta) {
    check(theta.size() >= 2, ErrorCode::DimensionMismatch, "sphere parameter length");
    return {theta.head(theta.size() - 1), theta(theta.size() - 1)};
  }
};

inline Vector sphere_direction(const Eigen::Ref<const Vector>& z) {
  const double norm = z.norm();
  if (!(norm > 0.0)) throw Error(ErrorCode::DegenerateLatent, "zero latent vector");
  return z / norm;
}

inline Vector sphere_sample(const SphereParams& theta, const Eigen::Ref<const Vector>& z) {
  check(z.size() == theta.c.size(), ErrorCode::DimensionMismatch, "latent dimension");
  return theta.c + theta.r * sphere_direction(z);
}

/// d x (d + 1) Jacobian [I | z / |z|].
inline Matrix sphere_jacobian(const SphereParams& theta, const Eigen::Ref<const Vector>& z) {
  const Eigen::Index d = theta.c.size();
  check(z.size() == d, ErrorCode::DimensionMismatch, "latent dimension");
  Matrix out(d, d + 1);
  out.leftCols(d).setIdentity();
  out.col(d) = sphere_direction(z);
  return out;
}

/// The Wasserstein information matrix of (c, r) is the identity: the tangent
/// fields e_i and (x - c) / r are gradients, mutually orthogonal under the
/// uniform measure, each with unit second moment.
inline Vector sphere_exact_wng(const SphereParams& theta, const Eigen::Ref<const Vector>& euclid) {
  check(euclid.size() == theta.c.size() + 1, ErrorCode::DimensionMismatch, "gradient length");
  return euclid;
}

inline ModelSpec make_sphere_model(Eigen::Index d) {
  ModelSpec m;
  m.name = "sphere";
  m.dim_d = d;
  m.dim_q = d + 1;
  m.dim_latent = d;
  m.sample = [](const Vector& theta, const Vector& z) { return sphere_sample(SphereParams::from_theta(theta), z); };
  m.jacobian = [](const Vector& theta, const Vector& z) {
    return sphere_jacobian(SphereParams::from_theta(theta), z);
  };
  m.latent = [d](Rng& rng) {
    Vector z = standard_normal(rng, d);
    while (z.squaredNorm() == 0.0) z = standard_normal(rng, d);
    return z;
  };
  m.exact_wng = [](const Vector& theta, const Vector& euclid) {
    return sphere_exact_wng(SphereParams::from_theta(theta), euclid);
  };
  m.feasible = [](const Vector& theta) { return theta(theta.size() - 1) > 0.0; };
  return m;
}

}  // namespace kwng

#endif  // KWNG_MODELS_HPP
