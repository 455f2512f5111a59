#ifndef KWNG_EXPERIMENTS_INSTANCES_HPP
#define KWNG_EXPERIMENTS_INSTANCES_HPP

// Random problem instances shared by the sweeps, the self-test and the test
// suites.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "kwng/error.hpp"
#include "kwng/estimator.hpp"
#include "kwng/kernels.hpp"
#include "kwng/model_spec.hpp"
#include "kwng/models.hpp"

namespace kwng::experiments {

enum class ModelKind { Gaussian, LogNormal, Sphere };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Gaussian: return "gaussian";
    case ModelKind::LogNormal: return "lognormal";
    case ModelKind::Sphere: return "sphere";
  }
  return "?";
}

inline ModelKind parse_model(const std::string& name) {
  if (name == "gaussian") return ModelKind::Gaussian;
  if (name == "lognormal") return ModelKind::LogNormal;
  if (name == "sphere") return ModelKind::Sphere;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + name + "'");
}

inline ModelSpec make_model(ModelKind kind, Eigen::Index d) {
  check(d >= 1, ErrorCode::InvalidArgument, "dimension must be positive");
  switch (kind) {
    case ModelKind::Gaussian: return make_gaussian_model(d);
    case ModelKind::LogNormal: return make_lognormal_model(d);
    case ModelKind::Sphere: return make_sphere_model(d);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model");
}

/// Deterministic generator for a tuple of integers (seed, stream, ...).
inline Rng derive_rng(std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t k : keys) {
    words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline constexpr double kInstanceVariance = 0.1;

inline Vector centered_normal(Rng& rng, Eigen::Index n, double variance = kInstanceVariance) {
  return std::sqrt(variance) * standard_normal(rng, n);
}

/// Mean from N(0, 0.1); covariance Q diag(0.5 + |g|) Q^T with Q the
/// orthogonal factor of a N(0, 0.1) matrix and g ~ N(0, 0.1).
inline GaussianParams random_gaussian_params(Eigen::Index d, Rng& rng) {
  const Vector mu = centered_normal(rng, d);
  Matrix a(d, d);
  for (Eigen::Index j = 0; j < d; ++j) a.col(j) = centered_normal(rng, d);
  const Matrix q = Eigen::HouseholderQR<Matrix>(a).householderQ();
  const Vector eig = (0.5 + centered_normal(rng, d).array().abs()).matrix();
  Matrix sigma = q * eig.asDiagonal() * q.transpose();
  sigma = 0.5 * (sigma + sigma.transpose());
  return GaussianParams::from_moments(mu, sigma);
}

inline SphereParams random_sphere_params(Eigen::Index d, Rng& rng) {
  SphereParams p;
  p.c = centered_normal(rng, d);
  p.r = 0.5 + std::abs(centered_normal(rng, 1)(0));
  return p;
}

struct Instance {
  Vector theta;
  Vector euclid;
};

inline Instance random_instance(ModelKind kind, Eigen::Index d, Rng& rng) {
  Instance out;
  switch (kind) {
    case ModelKind::Gaussian:
    case ModelKind::LogNormal: out.theta = random_gaussian_params(d, rng).theta(); break;
    case ModelKind::Sphere: out.theta = random_sphere_params(d, rng).theta(); break;
  }
  out.euclid = centered_normal(rng, out.theta.size());
  return out;
}

/// Matrices of one estimator problem, assembled from a random point cloud and
/// a random stacked Jacobian.
struct EstimatorInstance {
  Eigen::Index d = 0, q = 0, n = 0, m = 0;
  double epsilon = 0.0;
  double lambda = 0.0;
  Matrix c, k, t, gram;
  Vector damping;
  Vector euclid;
};

struct EstimatorInstanceLimits {
  Eigen::Index max_d = 5;
  Eigen::Index max_q = 20;
  Eigen::Index max_n = 200;
  Eigen::Index max_m = 20;
  std::vector<double> lambdas{0.0, 1e-3};
  std::vector<double> epsilons{1e-6, 1e-2};
  bool require_full_rank = false;  // lambda K + C C^T / N of rank M
  double sigma0 = 1.0;
  // Reject instances whose rank is numerically ambiguous: a singular value of
  // the stacked system [(eps D)^{-1/2} T^T; F] between these two fractions of
  // the largest one flips in or out of the range under round-off, and the
  // estimate with it.
  bool require_clear_rank = true;
  double ambiguous_low = 1e-14;
  double ambiguous_high = 1e-8;
};

/// True when no singular value of [(eps D)^{-1/2} T^T; F] falls inside
/// (low, high) relative to the largest, F^T F = lambda K + C C^T / N.
inline bool has_clear_rank(const EstimatorInstance& in, double low, double high) {
  Matrix z(in.q + in.m, in.m);
  z.topRows(in.q) = (in.epsilon * in.damping).cwiseSqrt().cwiseInverse().asDiagonal() * in.t.transpose();
  z.bottomRows(in.m) = regularizer_factor(in.c, in.k, in.lambda, in.n);
  const Vector sv = Eigen::JacobiSVD<Matrix>(z).singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return true;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    const double ratio = sv(i) / sv(0);
    if (ratio > low && ratio < high) return false;
  }
  return true;
}

inline EstimatorInstance random_estimator_instance(Rng& rng, const EstimatorInstanceLimits& lim = {}) {
  auto uniform_index = [&](Eigen::Index lo, Eigen::Index hi) {
    return std::uniform_int_distribution<Eigen::Index>(lo, hi)(rng);
  };
  auto pick = [&](const std::vector<double>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  for (;;) {
    EstimatorInstance in;
    in.d = uniform_index(1, lim.max_d);
    in.q = uniform_index(1, lim.max_q);
    in.m = uniform_index(1, lim.max_m);
    in.n = uniform_index(std::min<Eigen::Index>(lim.max_n, 5), lim.max_n);
    in.lambda = pick(lim.lambdas);
    in.epsilon = pick(lim.epsilons);

    SampleBatch batch;
    batch.x = standard_normal(rng, in.d * in.n).reshaped(in.d, in.n);
    batch.b = standard_normal(rng, in.d * in.n * in.q).reshaped(in.d * in.n, in.q);
    const NystromBasis basis = sample_basis(batch.x, in.m, rng);
    KernelSpec kernel;
    kernel.sigma0 = lim.sigma0;
    const double sigma = resolve_bandwidth(kernel, batch.x, basis.points);
    in.c = assemble_C(basis, batch.x, kernel, sigma);
    in.k = assemble_K(basis, kernel, sigma);
    in.t = assemble_T(in.c, batch);
    in.gram = in.c * in.c.transpose();
    in.damping = (0.5 + 1.5 * (0.5 * (standard_normal(rng, in.q).array().tanh() + 1.0))).matrix();
    in.euclid = standard_normal(rng, in.q);
    if (lim.require_full_rank) {
      const Matrix inner = in.gram / static_cast<double>(in.n) + in.lambda * in.k;
      if (svd_sym(inner, 1e-10).rank < in.m) continue;
    }
    if (lim.require_clear_rank && !has_clear_rank(in, lim.ambiguous_low, lim.ambiguous_high)) continue;
    return in;
  }
}

}  // namespace kwng::experiments

#endif  // KWNG_EXPERIMENTS_INSTANCES_HPP
