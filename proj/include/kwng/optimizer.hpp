#ifndef KWNG_OPTIMIZER_HPP
#define KWNG_OPTIMIZER_HPP

// Descent loop theta <- theta - gamma * direction, where the direction is the
// Euclidean gradient, the exact Wasserstein natural gradient, or its kernel
// estimate. Epsilon can follow a Levenberg-Marquardt style schedule: every
// `window` iterations it shrinks by omega when the loss decreased at least as
// predicted (r > 3/4) and grows by 1/omega when it did not (r < 1/4).

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kwng/error.hpp"
#include "kwng/estimator.hpp"
#include "kwng/kernels.hpp"
#include "kwng/model_spec.hpp"
#include "kwng/numerics.hpp"

namespace kwng {

enum class Method { Euclidean, ExactWNG, KWNG };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Euclidean: return "EG";
    case Method::ExactWNG: return "WNG";
    case Method::KWNG: return "KWNG";
  }
  return "?";
}

struct StepRecord {
  double loss_before = 0.0;
  double loss_after = 0.0;
  double step = 0.0;
  double inner = 0.0;  // <natural direction, euclidean gradient>
};

struct LMState {
  double epsilon = 1e-5;
  double omega = 0.85;
  std::size_t window = 5;
  std::vector<StepRecord> history;
};

inline void validate(const LMState& s) {
  check(s.epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
  check(s.omega > 0.0 && s.omega < 1.0, ErrorCode::InvalidArgument, "omega must lie in (0, 1)");
  check(s.window >= 1, ErrorCode::InvalidArgument, "window must be positive");
}

struct ReductionRatio {
  double value = 0.0;
  bool ascent = false;  // some step in the window had a negative predicted decrease
};

/// max over the window of 2 (L_t - L_{t+1}) / (gamma_t <g_nat, g>), i.e. the
/// actual decrease over the first-order prediction scaled by 2. The
/// denominator is floored at 1e-30 in magnitude, keeping its sign.
inline ReductionRatio reduction_ratio(const std::vector<StepRecord>& history) {
  check(!history.empty(), ErrorCode::EmptyWindow, "reduction ratio over an empty window");
  ReductionRatio out;
  out.value = -std::numeric_limits<double>::infinity();
  for (const StepRecord& h : history) {
    double denom = h.step * h.inner;
    if (denom < 0.0) out.ascent = true;
    if (std::abs(denom) < 1e-30) denom = std::copysign(1e-30, denom == 0.0 ? 1.0 : denom);
    out.value = std::max(out.value, 2.0 * (h.loss_before - h.loss_after) / denom);
  }
  return out;
}

inline LMState lm_update(LMState state, double r) {
  validate(state);
  if (r > 0.75) {
    state.epsilon *= state.omega;
  } else if (r < 0.25) {
    state.epsilon /= state.omega;
  }
  state.history.clear();
  return state;
}

struct DescentRecord {
  std::size_t iteration = 0;
  Vector theta;
  double loss = 0.0;
  double grad_norm = 0.0;
  double nat_norm = 0.0;
  double epsilon = 0.0;
  double step = 0.0;
};

enum class DescentStatus { Completed, Diverged };

struct DescentTrace {
  Method method = Method::Euclidean;
  std::vector<DescentRecord> records;
  DescentStatus status = DescentStatus::Completed;
  std::string message;

  double final_loss() const { return records.empty() ? std::numeric_limits<double>::quiet_NaN() : records.back().loss; }
};

/// Raises DivergenceDetected for a trace that stopped early.
inline void require_completed(const DescentTrace& trace) {
  if (trace.status == DescentStatus::Diverged) {
    throw Error(ErrorCode::DivergenceDetected, std::string(to_string(trace.method)) + ": " + trace.message);
  }
}

using LossFn = std::function<std::pair<double, Vector>(const Vector&)>;
using StepSchedule = std::function<double(std::size_t)>;

inline StepSchedule constant_step(double gamma) {
  return [gamma](std::size_t) { return gamma; };
}

struct DescentConfig {
  EstimatorConfig estimator;  // epsilon here is the initial epsilon
  KernelSpec kernel;
  Eigen::Index samples = 128;
  Eigen::Index basis = 100;
  bool adapt_epsilon = false;
  double omega = 0.85;
  std::size_t lm_window = 5;
  double divergence_threshold = 1e12;
  int max_backtracks = 60;
};

/// Runs `steps` updates and returns steps + 1 records (the last one holds the
/// final iterate with no direction). Steps leaving the feasible set are
/// halved until feasible.
inline DescentTrace run_descent(const ModelSpec& model, const LossFn& loss, Method method, const Vector& theta0,
                                std::size_t steps, const StepSchedule& schedule, const DescentConfig& cfg, Rng& rng) {
  check(theta0.size() == model.dim_q, ErrorCode::DimensionMismatch, "initial parameter length");
  if (method == Method::ExactWNG && !model.has_exact_wng()) {
    throw Error(ErrorCode::OracleUnavailable, "model has no exact natural gradient");
  }
  validate(cfg.estimator);

  DescentTrace trace;
  trace.method = method;
  LMState lm{cfg.estimator.epsilon, cfg.omega, cfg.lm_window, {}};
  validate(lm);

  Vector theta = theta0;
  auto [value, grad] = loss(theta);

  auto diverged = [&](double v) { return !std::isfinite(v) || v > cfg.divergence_threshold; };

  for (std::size_t t = 0;; ++t) {
    DescentRecord rec;
    rec.iteration = t;
    rec.theta = theta;
    rec.loss = value;
    rec.grad_norm = grad.norm();
    rec.epsilon = lm.epsilon;
    if (diverged(value) || !grad.allFinite()) {
      trace.records.push_back(std::move(rec));
      trace.status = DescentStatus::Diverged;
      trace.message = "loss diverged at iteration " + std::to_string(t);
      return trace;
    }
    if (t == steps) {
      trace.records.push_back(std::move(rec));
      break;
    }

    Vector direction;
    switch (method) {
      case Method::Euclidean: direction = grad; break;
      case Method::ExactWNG: direction = model.exact_wng(theta, grad); break;
      case Method::KWNG: {
        EstimatorConfig ecfg = cfg.estimator;
        ecfg.epsilon = lm.epsilon;
        ecfg.clip_norm.reset();
        direction = estimate(model, theta, cfg.kernel, ecfg, cfg.samples, cfg.basis, rng, grad).values;
        break;
      }
    }
    if (cfg.estimator.clip_norm) {
      direction = clip_by_norm({direction, GradientKind::Euclidean}, *cfg.estimator.clip_norm).values;
    }

    double step = schedule(t);
    Vector next = theta - step * direction;
    for (int k = 0; model.feasible && !model.feasible(next) && k < cfg.max_backtracks; ++k) {
      step *= 0.5;
      next = theta - step * direction;
    }
    if (model.feasible && !model.feasible(next)) {
      trace.records.push_back(std::move(rec));
      trace.status = DescentStatus::Diverged;
      trace.message = "no feasible step at iteration " + std::to_string(t);
      return trace;
    }
    rec.nat_norm = direction.norm();
    rec.step = step;
    trace.records.push_back(std::move(rec));

    const double inner = direction.dot(grad);
    theta = std::move(next);
    const double before = value;
    std::tie(value, grad) = loss(theta);

    if (cfg.adapt_epsilon && method == Method::KWNG) {
      lm.history.push_back({before, value, step, inner});
      if (lm.history.size() >= lm.window) lm = lm_update(std::move(lm), reduction_ratio(lm.history).value);
    }
  }
  return trace;
}

}  // namespace kwng

#endif  // KWNG_OPTIMIZER_HPP
