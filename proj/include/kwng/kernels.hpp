#ifndef KWNG_KERNELS_HPP
#define KWNG_KERNELS_HPP

// Stationary kernels with analytic first and mixed second derivatives.
//
// The bandwidth sigma acts as a squared length scale:
//   gaussian           k(x, y) = exp(-|x-y|^2 / (2 sigma))
//   rational quadratic k(x, y) = (1 + |x-y|^2 / (2 alpha sigma))^(-alpha)
//
// Both are radial, so every derivative reduces to two scalar profiles of
// r2 = |x-y|^2:
//   d k / d x_a          = -(x_a - y_a) * first
//   d2 k / d x_a d y_b   = delta_ab * first - (x_a - y_a)(x_b - y_b) * second

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kwng/error.hpp"
#include "kwng/numerics.hpp"

namespace kwng {

enum class KernelFamily { Gaussian, RationalQuadratic };

struct BandwidthPolicy {
  enum class Kind { Fixed, MeanSq, Median };
  Kind kind = Kind::MeanSq;
  double value = 1.0;  // only read for Fixed

  static BandwidthPolicy fixed(double sigma) { return {Kind::Fixed, sigma}; }
  static BandwidthPolicy mean_sq() { return {Kind::MeanSq, 1.0}; }
  static BandwidthPolicy median() { return {Kind::Median, 1.0}; }
};

struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  double sigma0 = 1.0;
  double rq_alpha = 1.0;
  BandwidthPolicy bandwidth = BandwidthPolicy::mean_sq();
};

inline void validate(const KernelSpec& spec) {
  check(spec.sigma0 > 0.0, ErrorCode::InvalidArgument, "sigma0 must be positive");
  check(spec.rq_alpha > 0.0, ErrorCode::InvalidArgument, "rq_alpha must be positive");
  if (spec.bandwidth.kind == BandwidthPolicy::Kind::Fixed) {
    check(spec.bandwidth.value > 0.0, ErrorCode::InvalidArgument, "fixed bandwidth must be positive");
  }
}

/// Resolves the bandwidth for samples X and basis points Y (one point per column).
inline double resolve_bandwidth(const KernelSpec& spec, const Eigen::Ref<const Matrix>& samples,
                                const Eigen::Ref<const Matrix>& basis) {
  validate(spec);
  if (spec.bandwidth.kind == BandwidthPolicy::Kind::Fixed) return spec.sigma0 * spec.bandwidth.value;

  check(samples.cols() > 0 && basis.cols() > 0, ErrorCode::EmptySet, "bandwidth needs non-empty point sets");
  check(samples.rows() == basis.rows(), ErrorCode::DimensionMismatch, "point sets differ in dimension");

  double spread = 0.0;
  if (spec.bandwidth.kind == BandwidthPolicy::Kind::MeanSq) {
    // mean_{n,m} |X_n - Y_m|^2 expanded through first and second moments.
    const double n = static_cast<double>(samples.cols());
    const double m = static_cast<double>(basis.cols());
    const Vector xbar = samples.rowwise().sum() / n;
    const Vector ybar = basis.rowwise().sum() / m;
    const double xsq = samples.colwise().squaredNorm().sum() / n;
    const double ysq = basis.colwise().squaredNorm().sum() / m;
    spread = std::max(xsq + ysq - 2.0 * xbar.dot(ybar), 0.0);
    // The moment expansion cancels catastrophically for near-coincident sets.
    if (spread < 1e-10 * (xsq + ysq)) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < basis.cols(); ++j) {
        acc += (samples.colwise() - basis.col(j)).colwise().squaredNorm().sum();
      }
      spread = acc / (n * m);
    }
  } else {
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(samples.cols() * basis.cols()));
    for (Eigen::Index j = 0; j < basis.cols(); ++j) {
      for (Eigen::Index i = 0; i < samples.cols(); ++i) {
        dist.push_back((samples.col(i) - basis.col(j)).squaredNorm());
      }
    }
    spread = median_of(std::move(dist));
  }
  check(spread > 0.0, ErrorCode::ZeroSpread, "all pairwise distances are zero");
  return spec.sigma0 * spread;
}

struct RadialTerms {
  double value;
  double first;
  double second;
};

inline RadialTerms radial_terms(const KernelSpec& spec, double sigma, double r2) {
  if (spec.family == KernelFamily::Gaussian) {
    const double k = std::exp(-r2 / (2.0 * sigma));
    return {k, k / sigma, k / (sigma * sigma)};
  }
  const double alpha = spec.rq_alpha;
  const double u = 1.0 + r2 / (2.0 * alpha * sigma);
  const double k = std::pow(u, -alpha);
  const double first = k / (u * sigma);
  const double second = (alpha + 1.0) / alpha * first / (u * sigma);
  return {k, first, second};
}

inline void check_pair(double sigma, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  check(sigma > 0.0, ErrorCode::InvalidArgument, "bandwidth must be positive");
  check(x.size() == y.size(), ErrorCode::DimensionMismatch, "kernel arguments differ in dimension");
  if (!x.allFinite() || !y.allFinite()) throw Error(ErrorCode::NonFinite, "kernel argument");
}

inline double k_eval(const KernelSpec& spec, double sigma, const Eigen::Ref<const Vector>& x,
                     const Eigen::Ref<const Vector>& y) {
  check_pair(sigma, x, y);
  return radial_terms(spec, sigma, (x - y).squaredNorm()).value;
}

/// Gradient of k with respect to its first argument.
inline Vector k_dx(const KernelSpec& spec, double sigma, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y) {
  check_pair(sigma, x, y);
  const Vector diff = x - y;
  return -radial_terms(spec, sigma, diff.squaredNorm()).first * diff;
}

/// Mixed Hessian, entry (i, j) = d2 k / d x_i d y_j.
inline Matrix k_dxdy(const KernelSpec& spec, double sigma, const Eigen::Ref<const Vector>& x,
                     const Eigen::Ref<const Vector>& y) {
  check_pair(sigma, x, y);
  const Vector diff = x - y;
  const RadialTerms t = radial_terms(spec, sigma, diff.squaredNorm());
  Matrix out = -t.second * diff * diff.transpose();
  out.diagonal().array() += t.first;
  return out;
}

/// Value of d2 k / d x_i d y_i at x = y; the same for both families.
inline double k_dxdy_diagonal(const KernelSpec& spec, double sigma) {
  return radial_terms(spec, sigma, 0.0).first;
}

inline KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "gaussian") return KernelFamily::Gaussian;
  if (name == "rq") return KernelFamily::RationalQuadratic;
  throw Error(ErrorCode::InvalidArgument, "unknown kernel family '" + name + "'");
}

inline BandwidthPolicy parse_bandwidth(const std::string& text) {
  if (text == "meansq") return BandwidthPolicy::mean_sq();
  if (text == "median") return BandwidthPolicy::median();
  if (text.rfind("fixed:", 0) == 0) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(text.substr(6), &used);
      if (used != text.size() - 6) throw std::invalid_argument(text);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument, "malformed bandwidth '" + text + "'");
    }
    check(v > 0.0, ErrorCode::InvalidArgument, "fixed bandwidth must be positive");
    return BandwidthPolicy::fixed(v);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown bandwidth policy '" + text + "'");
}

}  // namespace kwng

#endif  // KWNG_KERNELS_HPP
