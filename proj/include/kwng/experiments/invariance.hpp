#ifndef KWNG_EXPERIMENTS_INVARIANCE_HPP
#define KWNG_EXPERIMENTS_INVARIANCE_HPP

// Reparametrization check for the natural-gradient flow. The Gaussian model is
// optimized once in theta and once in psi = Psi(theta) with the componentwise
// map
//   psi_i = a_i theta_i + (a_i - 1) theta_i^3 / 3,   a_i log-spaced in [1, cond],
// whose Jacobian diag(a_i + (a_i - 1) theta_i^2) has condition number cond at
// the origin. A linear Psi would make the two Euler schemes agree exactly, so
// the cubic term is what exposes the O(gamma) discretization gap. Natural
// gradients transform as W_psi = J W_theta(J^T g_psi); Euclidean gradients do
// not, which is the contrapositive check.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kwng/error.hpp"
#include "kwng/experiments/instances.hpp"
#include "kwng/models.hpp"
#include "kwng/optimizer.hpp"

namespace kwng::experiments {

struct CubicReparam {
  Vector a;  // a_i >= 1

  static CubicReparam with_condition(Eigen::Index q, double condition) {
    check(condition >= 1.0, ErrorCode::InvalidArgument, "condition number must be at least 1");
    check(q >= 1, ErrorCode::InvalidArgument, "parameter dimension must be positive");
    CubicReparam r;
    r.a.resize(q);
    for (Eigen::Index i = 0; i < q; ++i) {
      const double t = q == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(q - 1);
      r.a(i) = std::pow(condition, t);
    }
    return r;
  }

  Vector apply(const Vector& theta) const {
    return (a.array() * theta.array() + (a.array() - 1.0) * theta.array().cube() / 3.0).matrix();
  }

  /// Diagonal of the Jacobian d psi / d theta.
  Vector jacobian(const Vector& theta) const {
    return (a.array() + (a.array() - 1.0) * theta.array().square()).matrix();
  }

  /// Newton iteration per coordinate; the map is strictly increasing.
  Vector inverse(const Vector& psi) const {
    Vector theta = psi.cwiseQuotient(a);
    for (int it = 0; it < 100; ++it) {
      const Vector step = (apply(theta) - psi).cwiseQuotient(jacobian(theta));
      theta -= step;
      if (step.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + theta.lpNorm<Eigen::Infinity>())) break;
    }
    return theta;
  }
};

/// The same model seen through psi; the exact natural gradient is
/// pushed forward by the Jacobian.
inline ModelSpec reparametrize(const ModelSpec& base, const CubicReparam& r) {
  ModelSpec m = base;
  m.name = base.name + "-reparam";
  m.sample = [base, r](const Vector& psi, const Vector& z) { return base.sample(r.inverse(psi), z); };
  m.jacobian = [base, r](const Vector& psi, const Vector& z) {
    const Vector theta = r.inverse(psi);
    return Matrix(base.jacobian(theta, z) * r.jacobian(theta).cwiseInverse().asDiagonal());
  };
  if (base.exact_wng) {
    m.exact_wng = [base, r](const Vector& psi, const Vector& g_psi) {
      const Vector theta = r.inverse(psi);
      const Vector j = r.jacobian(theta);
      return Vector(j.cwiseProduct(base.exact_wng(theta, j.cwiseProduct(g_psi))));
    };
  }
  if (base.feasible) m.feasible = [base, r](const Vector& psi) { return base.feasible(r.inverse(psi)); };
  return m;
}

inline LossFn reparametrize(const LossFn& loss, const CubicReparam& r) {
  return [loss, r](const Vector& psi) {
    const Vector theta = r.inverse(psi);
    auto [value, grad] = loss(theta);
    return std::pair<double, Vector>{value, grad.cwiseQuotient(r.jacobian(theta))};
  };
}

struct InvarianceConfig {
  Eigen::Index d = 2;
  std::vector<double> gammas{1e-2, 5e-3, 2.5e-3};
  double condition = 1e3;
  double horizon = 1.0;  // flow time; steps = horizon / gamma
  Method method = Method::ExactWNG;
  std::uint64_t seed = 0;
};

struct InvarianceReport {
  std::vector<double> gammas;
  std::vector<double> deviations;  // max_t |psi_t - Psi(theta_t)|
  std::vector<double> ratios;      // deviation[i + 1] / deviation[i]
  std::vector<double> orders;      // log(ratio) / log(gamma ratio)
};

inline InvarianceReport run_invariance(const InvarianceConfig& cfg) {
  check(!cfg.gammas.empty(), ErrorCode::InvalidArgument, "no step sizes");
  check(cfg.method != Method::KWNG, ErrorCode::InvalidArgument, "invariance runs use exact or Euclidean gradients");
  for (double g : cfg.gammas) check(g > 0.0, ErrorCode::InvalidArgument, "step size must be positive");
  Rng setup = derive_rng({cfg.seed, 5});
  const GaussianParams init = random_gaussian_params(cfg.d, setup);
  const GaussianParams target = random_gaussian_params(cfg.d, setup);
  const ModelSpec model = make_gaussian_model(cfg.d);
  const Eigen::Index d = cfg.d;
  const LossFn loss = [target, d](const Vector& theta) {
    return bures_loss_and_grad(GaussianParams::from_theta(theta, d), target);
  };
  const CubicReparam r = CubicReparam::with_condition(model.dim_q, cfg.condition);
  const ModelSpec model_psi = reparametrize(model, r);
  const LossFn loss_psi = reparametrize(loss, r);

  InvarianceReport rep;
  rep.gammas = cfg.gammas;
  DescentConfig dcfg;
  for (double gamma : cfg.gammas) {
    const auto steps = static_cast<std::size_t>(std::llround(cfg.horizon / gamma));
    Rng rng_a = derive_rng({cfg.seed, 6});
    Rng rng_b = derive_rng({cfg.seed, 6});
    const DescentTrace a = run_descent(model, loss, cfg.method, init.theta(), steps, constant_step(gamma), dcfg, rng_a);
    const DescentTrace b =
        run_descent(model_psi, loss_psi, cfg.method, r.apply(init.theta()), steps, constant_step(gamma), dcfg, rng_b);
    require_completed(a);
    require_completed(b);
    double dev = 0.0;
    for (std::size_t t = 0; t < a.records.size() && t < b.records.size(); ++t) {
      dev = std::max(dev, (b.records[t].theta - r.apply(a.records[t].theta)).norm());
    }
    rep.deviations.push_back(dev);
  }
  for (std::size_t i = 1; i < rep.deviations.size(); ++i) {
    const double ratio = rep.deviations[i] / rep.deviations[i - 1];
    rep.ratios.push_back(ratio);
    rep.orders.push_back(std::log(ratio) / std::log(rep.gammas[i] / rep.gammas[i - 1]));
  }
  return rep;
}

}  // namespace kwng::experiments

#endif  // KWNG_EXPERIMENTS_INVARIANCE_HPP
