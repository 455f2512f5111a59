#ifndef KWNG_EXPERIMENTS_SELFTEST_HPP
#define KWNG_EXPERIMENTS_SELFTEST_HPP

// Invariant suites runnable from the command line: oracle equivalence,
// representation consistency, stable/raw agreement, finite differences and
// metric inversion.

#include <chrono>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "kwng/estimator.hpp"
#include "kwng/experiments/instances.hpp"
#include "kwng/kernels.hpp"
#include "kwng/models.hpp"

namespace kwng::experiments {

using KAssembler = std::function<Matrix(const NystromBasis&, const KernelSpec&, double)>;

struct SelftestOptions {
  std::string filter;  // empty runs every suite; otherwise a suite name
  std::uint64_t seed = 0;
  int instances = 200;
  int probes = 100;
  KAssembler assemble_k = [](const NystromBasis& b, const KernelSpec& k, double s) { return assemble_K(b, k, s); };
};

struct SuiteResult {
  std::string name;
  bool passed = true;
  int checks = 0;
  int failures = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;
};

inline double relative_gap(const Vector& a, const Vector& b) {
  const double denom = b.norm();
  return denom > 0.0 ? (a - b).norm() / denom : a.norm();
}

/// Max-norm gap between two arrays relative to the max-norm of the reference.
inline double max_relative_gap(const Matrix& a, const Matrix& b) {
  const double scale = b.cwiseAbs().maxCoeff();
  const double diff = (a - b).cwiseAbs().maxCoeff();
  return scale > 0.0 ? diff / scale : diff;
}

// Central differences of k_eval.

inline Vector fd_k_dx(const KernelSpec& spec, double sigma, const Vector& x, const Vector& y, double h = 1e-5) {
  Vector out(x.size());
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    Vector xp = x, xm = x;
    xp(a) += h;
    xm(a) -= h;
    out(a) = (k_eval(spec, sigma, xp, y) - k_eval(spec, sigma, xm, y)) / (2.0 * h);
  }
  return out;
}

inline Matrix fd_k_dxdy(const KernelSpec& spec, double sigma, const Vector& x, const Vector& y, double h = 1e-4) {
  const Eigen::Index d = x.size();
  Matrix out(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      auto k = [&](double sa, double sb) {
        Vector xs = x, ys = y;
        xs(a) += sa * h;
        ys(b) += sb * h;
        return k_eval(spec, sigma, xs, ys);
      };
      out(a, b) = (k(1, 1) - k(1, -1) - k(-1, 1) + k(-1, -1)) / (4.0 * h * h);
    }
  }
  return out;
}

/// d x q central-difference Jacobian of theta -> sample(theta, z).
inline Matrix fd_model_jacobian(const ModelSpec& model, const Vector& theta, const Vector& z, double h = 1e-6) {
  Matrix out(model.dim_d, model.dim_q);
  for (Eigen::Index k = 0; k < model.dim_q; ++k) {
    Vector tp = theta, tm = theta;
    tp(k) += h;
    tm(k) -= h;
    out.col(k) = (model.sample(tp, z) - model.sample(tm, z)) / (2.0 * h);
  }
  return out;
}

/// C and K rebuilt entry by entry from finite differences of k_eval.
inline Matrix fd_assemble_C(const NystromBasis& basis, const Matrix& x, const KernelSpec& kernel, double sigma) {
  const Eigen::Index d = x.rows();
  Matrix c(basis.points.cols(), x.cols() * d);
  for (Eigen::Index m = 0; m < c.rows(); ++m) {
    for (Eigen::Index n = 0; n < x.cols(); ++n) {
      const Matrix mixed = fd_k_dxdy(kernel, sigma, basis.points.col(m), x.col(n));
      c.block(m, n * d, 1, d) = mixed.row(basis.idx[static_cast<std::size_t>(m)]);
    }
  }
  return c;
}

inline Matrix fd_assemble_K(const NystromBasis& basis, const KernelSpec& kernel, double sigma) {
  const Eigen::Index m = basis.points.cols();
  Matrix k(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      const Matrix mixed = fd_k_dxdy(kernel, sigma, basis.points.col(a), basis.points.col(b));
      k(a, b) = mixed(basis.idx[static_cast<std::size_t>(a)], basis.idx[static_cast<std::size_t>(b)]);
    }
  }
  return k;
}

namespace selftest_detail {

template <class Fn>
SuiteResult timed(const std::string& name, double tol, Fn&& body) {
  SuiteResult r;
  r.name = name;
  r.tolerance = tol;
  const auto start = std::chrono::steady_clock::now();
  body(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.passed = r.failures == 0;
  return r;
}

inline void record(SuiteResult& r, double gap) {
  ++r.checks;
  r.worst = std::max(r.worst, gap);
  if (!(gap <= r.tolerance)) ++r.failures;
}

inline KernelSpec random_kernel(Rng& rng) {
  KernelSpec k;
  if (std::uniform_int_distribution<int>(0, 1)(rng) == 1) {
    k.family = KernelFamily::RationalQuadratic;
    k.rq_alpha = std::uniform_real_distribution<double>(0.5, 3.0)(rng);
  }
  return k;
}

}  // namespace selftest_detail

inline SuiteResult selftest_oracle(const SelftestOptions& opt) {
  return selftest_detail::timed("oracle", 1e-6, [&](SuiteResult& r) {
    for (int i = 0; i < opt.instances; ++i) {
      Rng rng = derive_rng({opt.seed, 10, static_cast<std::uint64_t>(i)});
      const EstimatorInstance in = random_estimator_instance(rng);
      const Vector raw = kwng_raw(in.c, in.k, in.t, in.damping, in.epsilon, in.lambda, in.n, in.euclid).values;
      const Vector oracle =
          kwng_oracle_quadratic(in.c, in.k, in.t, in.damping, in.epsilon, in.lambda, in.n, in.euclid).values;
      selftest_detail::record(r, relative_gap(raw, oracle));
    }
  });
}

inline SuiteResult selftest_representation(const SelftestOptions& opt) {
  return selftest_detail::timed("representation", 1e-6, [&](SuiteResult& r) {
    EstimatorInstanceLimits lim;
    lim.require_full_rank = true;
    for (int i = 0; i < opt.instances; ++i) {
      Rng rng = derive_rng({opt.seed, 11, static_cast<std::uint64_t>(i)});
      const EstimatorInstance in = random_estimator_instance(rng, lim);
      const Vector raw = kwng_raw(in.c, in.k, in.t, in.damping, in.epsilon, in.lambda, in.n, in.euclid).values;
      const Vector rep =
          kwng_representation(in.c, in.k, in.t, in.damping, in.epsilon, in.lambda, in.n, in.euclid).values;
      selftest_detail::record(r, relative_gap(raw, rep));
    }
  });
}

inline SuiteResult selftest_stable(const SelftestOptions& opt) {
  return selftest_detail::timed("stable", 1e-6, [&](SuiteResult& r) {
    EstimatorInstanceLimits lim;
    lim.require_full_rank = true;
    lim.lambdas = {0.0};
    for (int i = 0; i < opt.instances / 2; ++i) {
      Rng rng = derive_rng({opt.seed, 12, static_cast<std::uint64_t>(i)});
      const EstimatorInstance in = random_estimator_instance(rng, lim);
      const Vector raw = kwng_raw(in.c, in.k, in.t, in.damping, in.epsilon, 0.0, in.n, in.euclid).values;
      const Vector stable = kwng_stable(in.c, in.t, in.damping, in.epsilon, in.n, {}, in.euclid).gradient.values;
      selftest_detail::record(r, relative_gap(stable, raw));
    }
  });
}

/// Kernel derivatives, C and K assembly, and model Jacobians against central
/// differences.
inline SuiteResult selftest_finite_difference(const SelftestOptions& opt) {
  return selftest_detail::timed("finite-difference", 1e-4, [&](SuiteResult& r) {
    for (int i = 0; i < opt.probes; ++i) {
      Rng rng = derive_rng({opt.seed, 13, static_cast<std::uint64_t>(i)});
      const KernelSpec kernel = selftest_detail::random_kernel(rng);
      const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(1, 4)(rng);
      const double sigma = std::uniform_real_distribution<double>(0.5, 3.0)(rng);
      const Vector x = standard_normal(rng, d), y = standard_normal(rng, d);
      selftest_detail::record(r, max_relative_gap(k_dx(kernel, sigma, x, y), fd_k_dx(kernel, sigma, x, y)));
      selftest_detail::record(r, max_relative_gap(k_dxdy(kernel, sigma, x, y), fd_k_dxdy(kernel, sigma, x, y)));
    }
    for (int i = 0; i < 10; ++i) {
      Rng rng = derive_rng({opt.seed, 14, static_cast<std::uint64_t>(i)});
      const KernelSpec kernel = selftest_detail::random_kernel(rng);
      const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(1, 3)(rng);
      const Matrix x = standard_normal(rng, d * 12).reshaped(d, 12);
      const NystromBasis basis = sample_basis(x, 6, rng);
      const double sigma = resolve_bandwidth(kernel, x, basis.points);
      selftest_detail::record(r, max_relative_gap(assemble_C(basis, x, kernel, sigma),
                                                  fd_assemble_C(basis, x, kernel, sigma)));
      selftest_detail::record(r, max_relative_gap(opt.assemble_k(basis, kernel, sigma),
                                                  fd_assemble_K(basis, kernel, sigma)));
    }
    const ModelKind kinds[] = {ModelKind::Gaussian, ModelKind::LogNormal, ModelKind::Sphere};
    for (int i = 0; i < opt.probes; ++i) {
      Rng rng = derive_rng({opt.seed, 15, static_cast<std::uint64_t>(i)});
      const ModelKind kind = kinds[i % 3];
      const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(1, 4)(rng);
      const ModelSpec model = make_model(kind, d);
      const Instance inst = random_instance(kind, d, rng);
      const Vector z = model.latent(rng);
      selftest_detail::record(r, max_relative_gap(model.jacobian(inst.theta, z),
                                                  fd_model_jacobian(model, inst.theta, z)));
    }
  });
}

/// Applying the metric to the exact natural gradient returns the gradient.
inline SuiteResult selftest_metric(const SelftestOptions& opt) {
  return selftest_detail::timed("metric", 1e-10, [&](SuiteResult& r) {
    for (int i = 0; i < opt.probes; ++i) {
      Rng rng = derive_rng({opt.seed, 16, static_cast<std::uint64_t>(i)});
      const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(1, 6)(rng);
      const GaussianParams theta = random_gaussian_params(d, rng);
      const Vector g = centered_normal(rng, gaussian_dim_q(d));
      selftest_detail::record(r, relative_gap(gaussian_metric_apply(theta, gaussian_exact_wng(theta, g)), g));
    }
    for (int i = 0; i < 10; ++i) {
      Rng rng = derive_rng({opt.seed, 17, static_cast<std::uint64_t>(i)});
      const LogNormalParams theta = random_gaussian_params(1, rng);
      const Vector g = centered_normal(rng, 2);
      selftest_detail::record(r, relative_gap(lognormal_metric_1d(theta) * lognormal_exact_wng_1d(theta, g), g));
    }
  });
}

inline const std::vector<std::string>& selftest_suite_names() {
  static const std::vector<std::string> names{"oracle", "representation", "stable", "finite-difference", "metric"};
  return names;
}

inline std::vector<SuiteResult> run_selftest(const SelftestOptions& opt) {
  if (!opt.filter.empty()) {
    bool known = false;
    for (const auto& n : selftest_suite_names()) known = known || n == opt.filter;
    check(known, ErrorCode::InvalidArgument, ("unknown selftest suite '" + opt.filter + "'").c_str());
  }
  std::vector<SuiteResult> out;
  auto want = [&](const char* name) { return opt.filter.empty() || opt.filter == name; };
  if (want("oracle")) out.push_back(selftest_oracle(opt));
  if (want("representation")) out.push_back(selftest_representation(opt));
  if (want("stable")) out.push_back(selftest_stable(opt));
  if (want("finite-difference")) out.push_back(selftest_finite_difference(opt));
  if (want("metric")) out.push_back(selftest_metric(opt));
  return out;
}

inline std::string describe(const SuiteResult& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.checks - r.failures << '/' << r.checks
     << " within " << r.tolerance << " (worst " << r.worst << ", " << r.seconds << " s)";
  return os.str();
}

}  // namespace kwng::experiments

#endif  // KWNG_EXPERIMENTS_SELFTEST_HPP
