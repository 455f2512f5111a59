#ifndef KWNG_EXPERIMENTS_TRAJECTORY_HPP
#define KWNG_EXPERIMENTS_TRAJECTORY_HPP

// Gaussian model fitted to a Gaussian target under the squared Bures
// distance, with Euclidean, exact natural and kernel natural gradients. Every
// trace is projected onto the top two principal directions of the exact
// natural-gradient iterates.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "kwng/error.hpp"
#include "kwng/experiments/instances.hpp"
#include "kwng/experiments/io.hpp"
#include "kwng/experiments/svg.hpp"
#include "kwng/models.hpp"
#include "kwng/numerics.hpp"
#include "kwng/optimizer.hpp"

namespace kwng::experiments {

/// Estimator settings of the trajectory study: eps = 1e-10, lambda = 0.
inline EstimatorConfig natural_defaults() {
  EstimatorConfig e;
  e.epsilon = 1e-10;
  e.lambda = 0.0;
  return e;
}

struct TrajectoryConfig {
  Eigen::Index d = 10;
  std::size_t steps = 200;
  double gamma_natural = 0.1;
  double gamma_euclidean = 1e-4;
  Eigen::Index samples = 128;
  Eigen::Index basis = 100;
  KernelSpec kernel;  // mean-square bandwidth
  EstimatorConfig estimator = natural_defaults();
  bool adapt_epsilon = false;
  std::vector<Method> methods{Method::Euclidean, Method::ExactWNG, Method::KWNG};
  std::uint64_t seed = 0;
};

struct TrajectoryResult {
  GaussianParams initial, target;
  std::vector<DescentTrace> traces;
  PcaResult pca;
  std::vector<Matrix> projections;  // 2 x (steps + 1) per trace

  const DescentTrace* find(Method m) const {
    for (const auto& t : traces)
      if (t.method == m) return &t;
    return nullptr;
  }
};

inline Matrix trace_points(const DescentTrace& trace) {
  check(!trace.records.empty(), ErrorCode::EmptySet, "empty trace");
  Matrix pts(trace.records.front().theta.size(), static_cast<Eigen::Index>(trace.records.size()));
  for (std::size_t i = 0; i < trace.records.size(); ++i) pts.col(static_cast<Eigen::Index>(i)) = trace.records[i].theta;
  return pts;
}

inline Matrix project(const PcaResult& pca, const Matrix& points) {
  return pca.basis.transpose() * (points.colwise() - pca.mean);
}

/// Traces run with independent generators derived from (seed, method); the
/// principal directions come from the exact natural-gradient trace, or from
/// the first trace when that method is not requested.
inline TrajectoryResult run_trajectory(const TrajectoryConfig& cfg) {
  check(cfg.d >= 1, ErrorCode::InvalidArgument, "dimension must be positive");
  check(!cfg.methods.empty(), ErrorCode::InvalidArgument, "no methods requested");
  TrajectoryResult out;
  Rng setup = derive_rng({cfg.seed, 3});
  out.initial = random_gaussian_params(cfg.d, setup);
  out.target = random_gaussian_params(cfg.d, setup);
  const ModelSpec model = make_gaussian_model(cfg.d);
  const GaussianParams target = out.target;
  const Eigen::Index d = cfg.d;
  const LossFn loss = [target, d](const Vector& theta) {
    return bures_loss_and_grad(GaussianParams::from_theta(theta, d), target);
  };

  DescentConfig dcfg;
  dcfg.estimator = cfg.estimator;
  dcfg.kernel = cfg.kernel;
  dcfg.samples = cfg.samples;
  dcfg.basis = cfg.basis;
  dcfg.adapt_epsilon = cfg.adapt_epsilon;

  for (Method m : cfg.methods) {
    Rng rng = derive_rng({cfg.seed, 4, static_cast<std::uint64_t>(m)});
    const double gamma = m == Method::Euclidean ? cfg.gamma_euclidean : cfg.gamma_natural;
    out.traces.push_back(run_descent(model, loss, m, out.initial.theta(), cfg.steps, constant_step(gamma), dcfg, rng));
  }
  const DescentTrace* reference = out.find(Method::ExactWNG);
  if (reference == nullptr) reference = &out.traces.front();
  out.pca = pca_top2(trace_points(*reference));
  for (const auto& t : out.traces) out.projections.push_back(project(out.pca, trace_points(t)));
  return out;
}

/// Largest distance between the projected iterates of two traces, over the
/// common prefix.
inline double projected_gap(const Matrix& a, const Matrix& b) {
  const Eigen::Index n = std::min(a.cols(), b.cols());
  double gap = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) gap = std::max(gap, (a.col(i) - b.col(i)).norm());
  return gap;
}

/// Largest distance of a projected trace from its first point.
inline double projected_extent(const Matrix& a) {
  double ext = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) ext = std::max(ext, (a.col(i) - a.col(0)).norm());
  return ext;
}

inline void write_trajectory_csv(std::ostream& os, const TrajectoryResult& r) {
  os << "method,iteration,loss,pc1,pc2,epsilon,step\n";
  for (std::size_t k = 0; k < r.traces.size(); ++k) {
    const auto& t = r.traces[k];
    for (std::size_t i = 0; i < t.records.size(); ++i) {
      const auto& rec = t.records[i];
      const auto col = static_cast<Eigen::Index>(i);
      os << to_string(t.method) << ',' << rec.iteration << ',' << format_real(rec.loss) << ','
         << format_real(r.projections[k](0, col)) << ',' << format_real(r.projections[k](1, col)) << ','
         << format_real(rec.epsilon) << ',' << format_real(rec.step) << '\n';
    }
  }
}

inline Chart trajectory_loss_chart(const TrajectoryResult& r) {
  Chart c{"Bures loss per iteration", "iteration", "loss", false, true, {}};
  for (const auto& t : r.traces) {
    Series s;
    s.name = to_string(t.method);
    s.markers = false;
    for (const auto& rec : t.records) {
      s.x.push_back(static_cast<double>(rec.iteration));
      s.y.push_back(rec.loss);
    }
    c.series.push_back(std::move(s));
  }
  return c;
}

inline Chart trajectory_projection_chart(const TrajectoryResult& r) {
  Chart c{"Iterates on the top two principal directions", "PC 1", "PC 2", false, false, {}};
  for (std::size_t k = 0; k < r.traces.size(); ++k) {
    Series s;
    s.name = to_string(r.traces[k].method);
    for (Eigen::Index i = 0; i < r.projections[k].cols(); ++i) {
      s.x.push_back(r.projections[k](0, i));
      s.y.push_back(r.projections[k](1, i));
    }
    c.series.push_back(std::move(s));
  }
  return c;
}

}  // namespace kwng::experiments

#endif  // KWNG_EXPERIMENTS_TRAJECTORY_HPP
