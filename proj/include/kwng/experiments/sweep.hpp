#ifndef KWNG_EXPERIMENTS_SWEEP_HPP
#define KWNG_EXPERIMENTS_SWEEP_HPP

// Relative-error sweeps of the estimator against the exact natural gradient.
// A cell is one (d, N, M[, sigma0]) combination; each cell runs `runs`
// independent repetitions. Run r of a cell uses the instance drawn from
// (seed, d, r), so cells sharing d see the same parameters and gradients, and
// the estimator draws from (seed, run_id).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "kwng/error.hpp"
#include "kwng/estimator.hpp"
#include "kwng/experiments/instances.hpp"
#include "kwng/kernels.hpp"
#include "kwng/numerics.hpp"

namespace kwng::experiments {

struct BasisRule {
  enum class Kind { Explicit, DSqrtN };
  Kind kind = Kind::DSqrtN;
  std::vector<Eigen::Index> values;  // Explicit only
  int multiplier = 1;                // DSqrtN: M = multiplier * floor(d sqrt(N))

  static BasisRule d_sqrt_n(int multiplier = 1) { return {Kind::DSqrtN, {}, multiplier}; }
  static BasisRule explicit_values(std::vector<Eigen::Index> m) { return {Kind::Explicit, std::move(m), 1}; }

  std::vector<Eigen::Index> resolve(Eigen::Index d, Eigen::Index n) const {
    if (kind == Kind::Explicit) return values;
    const auto m = static_cast<Eigen::Index>(std::floor(static_cast<double>(d) * std::sqrt(static_cast<double>(n))));
    return {std::max<Eigen::Index>(1, m) * multiplier};
  }
};

struct SweepConfig {
  ModelKind model = ModelKind::Sphere;
  std::vector<Eigen::Index> dims{3};
  std::vector<Eigen::Index> samples{5000};
  BasisRule basis = BasisRule::d_sqrt_n();
  KernelSpec kernel{KernelFamily::Gaussian, 1.0, 1.0, BandwidthPolicy::fixed(1.0)};
  EstimatorConfig estimator;
  int runs = 20;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

inline void validate(const SweepConfig& cfg) {
  check(cfg.runs >= 1, ErrorCode::InvalidArgument, "runs must be at least 1");
  check(!cfg.dims.empty(), ErrorCode::InvalidArgument, "dims must be non-empty");
  check(!cfg.samples.empty(), ErrorCode::InvalidArgument, "samples must be non-empty");
  for (auto d : cfg.dims) check(d >= 1, ErrorCode::InvalidArgument, "dimension must be positive");
  for (auto n : cfg.samples) check(n >= 1, ErrorCode::InvalidArgument, "sample count must be positive");
  if (cfg.basis.kind == BasisRule::Kind::Explicit) {
    check(!cfg.basis.values.empty(), ErrorCode::InvalidArgument, "explicit basis list is empty");
    for (auto m : cfg.basis.values) check(m >= 1, ErrorCode::InvalidArgument, "basis size must be positive");
  }
  validate(cfg.kernel);
  validate(cfg.estimator);
}

struct ExperimentRecord {
  std::uint64_t run_id = 0;
  std::string model;
  Eigen::Index d = 0, q = 0, n = 0, m = 0;
  double sigma0 = 0.0;
  double epsilon = 0.0;
  double lambda = 0.0;
  double rel_error = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
  bool failed = false;
  std::string error;
};

/// Throws OracleUnavailable unless every requested dimension has an exact
/// natural gradient.
inline void require_oracle(ModelKind model, const std::vector<Eigen::Index>& dims) {
  for (auto d : dims) {
    if (!make_model(model, d).has_exact_wng()) {
      throw Error(ErrorCode::OracleUnavailable,
                  std::string(to_string(model)) + " has no exact natural gradient at d = " + std::to_string(d));
    }
  }
}

struct SweepTask {
  Eigen::Index d = 0, n = 0, m = 0;
  double sigma0 = 0.0;
  int repetition = 0;
};

/// One repetition: random instance, estimate, exact oracle, relative error.
inline ExperimentRecord run_single(const SweepConfig& cfg, const SweepTask& task, std::uint64_t run_id) {
  ExperimentRecord rec;
  rec.run_id = run_id;
  rec.model = to_string(cfg.model);
  rec.d = task.d;
  rec.n = task.n;
  rec.m = task.m;
  rec.sigma0 = task.sigma0;
  rec.epsilon = cfg.estimator.epsilon;
  rec.lambda = cfg.estimator.lambda;
  const auto start = std::chrono::steady_clock::now();
  try {
    const ModelSpec model = make_model(cfg.model, task.d);
    rec.q = model.dim_q;
    Rng instance_rng = derive_rng({cfg.seed, 1, static_cast<std::uint64_t>(task.d),
                                   static_cast<std::uint64_t>(task.repetition)});
    const Instance inst = random_instance(cfg.model, task.d, instance_rng);
    KernelSpec kernel = cfg.kernel;
    kernel.sigma0 = task.sigma0;
    Rng rng = derive_rng({cfg.seed, 2, run_id});
    const Vector est = estimate(model, inst.theta, kernel, cfg.estimator, task.n, task.m, rng, inst.euclid).values;
    const Vector exact = model.exact_wng(inst.theta, inst.euclid);
    const double denom = exact.norm();
    check(denom > 0.0, ErrorCode::NonFinite, "exact natural gradient vanished");
    rec.rel_error = (est - exact).norm() / denom;
    check(std::isfinite(rec.rel_error), ErrorCode::NonFinite, "relative error");
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
    rec.rel_error = std::numeric_limits<double>::quiet_NaN();
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

/// Runs tasks in a pool; record i corresponds to task i and has run_id i.
inline std::vector<ExperimentRecord> run_tasks(const SweepConfig& cfg, const std::vector<SweepTask>& tasks) {
  std::vector<ExperimentRecord> out(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) out[i] = run_single(cfg, tasks[i], i);
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(tasks.size())));
  if (threads == 1) {
    worker();
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return out;
}

inline std::vector<SweepTask> sweep_tasks(const SweepConfig& cfg, const std::vector<double>& sigma_grid) {
  std::vector<SweepTask> tasks;
  for (auto d : cfg.dims)
    for (auto n : cfg.samples)
      for (auto m : cfg.basis.resolve(d, n))
        for (double s : sigma_grid)
          for (int r = 0; r < cfg.runs; ++r) tasks.push_back({d, n, m, s, r});
  return tasks;
}

inline std::vector<ExperimentRecord> run_error_sweep(const SweepConfig& cfg) {
  validate(cfg);
  require_oracle(cfg.model, cfg.dims);
  return run_tasks(cfg, sweep_tasks(cfg, {cfg.kernel.sigma0}));
}

/// The bandwidth is fixed at each grid value (policy Fixed(1) scaled by
/// sigma0 = grid value).
inline std::vector<ExperimentRecord> run_bandwidth_sweep(SweepConfig cfg, const std::vector<double>& sigma_grid) {
  check(!sigma_grid.empty(), ErrorCode::InvalidArgument, "bandwidth grid is empty");
  for (double s : sigma_grid) check(s > 0.0 && std::isfinite(s), ErrorCode::InvalidArgument, "bandwidth must be positive");
  cfg.kernel.bandwidth = BandwidthPolicy::fixed(1.0);
  validate(cfg);
  require_oracle(cfg.model, cfg.dims);
  return run_tasks(cfg, sweep_tasks(cfg, sigma_grid));
}

inline std::vector<double> logspace(double lo_exp, double hi_exp, int count) {
  check(count >= 1, ErrorCode::InvalidArgument, "logspace count");
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    out.push_back(std::pow(10.0, lo_exp + t * (hi_exp - lo_exp)));
  }
  return out;
}

struct CellKey {
  Eigen::Index d = 0, n = 0, m = 0;
  double sigma0 = 0.0;
  auto tie() const { return std::tie(d, n, m, sigma0); }
  bool operator<(const CellKey& o) const { return tie() < o.tie(); }
  bool operator==(const CellKey& o) const { return tie() == o.tie(); }
};

struct CellSummary {
  CellKey key;
  std::size_t count = 0;
  std::size_t failures = 0;
  double q1 = 0.0, median = 0.0, q3 = 0.0, min = 0.0, max = 0.0;
};

inline double quantile_of(std::vector<double> v, double p) {
  check(!v.empty(), ErrorCode::EmptySet, "quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Per-cell quantiles computed from the records, failed runs excluded.
inline std::vector<CellSummary> summarize(const std::vector<ExperimentRecord>& records) {
  std::map<CellKey, std::vector<double>> values;
  std::map<CellKey, std::size_t> failures;
  for (const auto& r : records) {
    const CellKey key{r.d, r.n, r.m, r.sigma0};
    values[key];
    if (r.failed || !std::isfinite(r.rel_error)) {
      ++failures[key];
    } else {
      values[key].push_back(r.rel_error);
    }
  }
  std::vector<CellSummary> out;
  for (auto& [key, v] : values) {
    CellSummary s;
    s.key = key;
    s.count = v.size();
    s.failures = failures[key];
    if (!v.empty()) {
      s.q1 = quantile_of(v, 0.25);
      s.median = quantile_of(v, 0.5);
      s.q3 = quantile_of(v, 0.75);
      s.min = *std::min_element(v.begin(), v.end());
      s.max = *std::max_element(v.begin(), v.end());
    } else {
      s.q1 = s.median = s.q3 = s.min = s.max = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(s);
  }
  return out;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  check(x.size() == y.size() && x.size() >= 2, ErrorCode::InvalidArgument, "slope needs two matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace kwng::experiments

#endif  // KWNG_EXPERIMENTS_SWEEP_HPP
