// Acceptance run: one PASS/FAIL line per criterion, followed by the measured
// numbers. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "kwng/estimator.hpp"
#include "kwng/experiments/instances.hpp"
#include "kwng/experiments/invariance.hpp"
#include "kwng/experiments/selftest.hpp"
#include "kwng/experiments/sweep.hpp"
#include "kwng/experiments/trajectory.hpp"
#include "kwng/models.hpp"
#include "kwng/optimizer.hpp"

using namespace kwng;
using namespace kwng::experiments;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < budget_seconds;
  const bool ok = o.passed && in_time;
  if (!ok) ++failures;
  std::printf("%s %2d %s | %s | %.2f s (budget %.0f s%s)\n", ok ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
              secs, budget_seconds, in_time ? "" : ", exceeded");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Vector raw_of(const EstimatorInstance& in) {
  return kwng_raw(in.c, in.k, in.t, in.damping, in.epsilon, in.lambda, in.n, in.euclid).values;
}

std::vector<double> medians(const std::vector<ExperimentRecord>& records, std::size_t* failed) {
  std::vector<double> out;
  for (const auto& c : summarize(records)) {
    out.push_back(c.median);
    *failed += c.failures;
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.4g", x);
  return s;
}

}  // namespace

int main() {
  criterion(1, "oracle equivalence, 200 instances, 1e-6", 30, [] {
    Rng rng = derive_rng({2024, 1});
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const EstimatorInstance in = random_estimator_instance(rng);
      const Vector oracle =
          kwng_oracle_quadratic(in.c, in.k, in.t, in.damping, in.epsilon, in.lambda, in.n, in.euclid).values;
      worst = std::max(worst, relative_gap(raw_of(in), oracle));
    }
    // How often the generator discards a draw with a numerically ambiguous rank.
    EstimatorInstanceLimits loose;
    loose.require_clear_rank = false;
    int ambiguous = 0, disagree = 0;
    for (int i = 0; i < 500; ++i) {
      const EstimatorInstance in = random_estimator_instance(rng, loose);
      if (!has_clear_rank(in, loose.ambiguous_low, loose.ambiguous_high)) ++ambiguous;
      const Vector oracle =
          kwng_oracle_quadratic(in.c, in.k, in.t, in.damping, in.epsilon, in.lambda, in.n, in.euclid).values;
      if (relative_gap(raw_of(in), oracle) > 1e-6) ++disagree;
    }
    return Outcome{worst <= 1e-6, fmt("worst %.3g", worst) +
                                      fmt("; unfiltered draws: %.1f%% ambiguous rank (rejected)", ambiguous / 5.0) +
                                      fmt(", %.1f%% beyond 1e-6", disagree / 5.0)};
  });

  criterion(2, "representation (eps D + G)^-1 g, full rank, 1e-6", 10, [] {
    Rng rng = derive_rng({2024, 2});
    EstimatorInstanceLimits lim;
    lim.require_full_rank = true;
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const EstimatorInstance in = random_estimator_instance(rng, lim);
      const Vector rep =
          kwng_representation(in.c, in.k, in.t, in.damping, in.epsilon, in.lambda, in.n, in.euclid).values;
      worst = std::max(worst, relative_gap(raw_of(in), rep));
    }
    return Outcome{worst <= 1e-6, fmt("worst %.3g over 200", worst)};
  });

  criterion(3, "stable vs raw at lambda = 0, 100 instances, 1e-6", 10, [] {
    Rng rng = derive_rng({2024, 3});
    EstimatorInstanceLimits lim;
    lim.lambdas = {0.0};
    lim.require_full_rank = true;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const EstimatorInstance in = random_estimator_instance(rng, lim);
      const Vector s = kwng_stable(in.c, in.t, in.damping, in.epsilon, in.n, {}, in.euclid).gradient.values;
      worst = std::max(worst, relative_gap(s, raw_of(in)));
    }
    return Outcome{worst <= 1e-6, fmt("worst %.3g", worst)};
  });

  criterion(4, "Gaussian metric inversion, 100 SPD, d <= 6, 1e-10", 5, [] {
    Rng rng = derive_rng({2024, 4});
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Eigen::Index d = 1 + i % 6;
      const GaussianParams p = random_gaussian_params(d, rng);
      const Vector g = standard_normal(rng, gaussian_dim_q(d));
      worst = std::max(worst, relative_gap(gaussian_metric_apply(p, gaussian_exact_wng(p, g)), g));
    }
    return Outcome{worst <= 1e-10, fmt("worst %.3g", worst)};
  });

  criterion(5, "finite differences, kernels and Jacobians, 100 probes each, 1e-4", 30, [] {
    Rng rng = derive_rng({2024, 5});
    std::string detail;
    double worst_all = 0.0;
    KernelSpec rq;
    rq.family = KernelFamily::RationalQuadratic;
    for (const auto& [name, kernel] : {std::pair{"gaussian", KernelSpec{}}, std::pair{"rq", rq}}) {
      double wdx = 0.0, wdxdy = 0.0;
      for (int i = 0; i < 100; ++i) {
        const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(1, 5)(rng);
        const double sigma = std::uniform_real_distribution<double>(0.3, 3.0)(rng);
        const Vector x = standard_normal(rng, d), y = standard_normal(rng, d);
        wdx = std::max(wdx, max_relative_gap(k_dx(kernel, sigma, x, y), fd_k_dx(kernel, sigma, x, y)));
        wdxdy = std::max(wdxdy, max_relative_gap(k_dxdy(kernel, sigma, x, y), fd_k_dxdy(kernel, sigma, x, y)));
      }
      detail += std::string(name) + fmt(" dx %.2g", wdx) + fmt(" dxdy %.2g, ", wdxdy);
      worst_all = std::max({worst_all, wdx, wdxdy});
    }
    for (ModelKind kind : {ModelKind::Gaussian, ModelKind::LogNormal, ModelKind::Sphere}) {
      double w = 0.0;
      for (int i = 0; i < 100; ++i) {
        const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(1, 5)(rng);
        const ModelSpec model = make_model(kind, d);
        const Instance inst = random_instance(kind, d, rng);
        const Vector z = model.latent(rng);
        w = std::max(w, max_relative_gap(model.jacobian(inst.theta, z), fd_model_jacobian(model, inst.theta, z)));
      }
      detail += std::string(to_string(kind)) + fmt(" %.2g, ", w);
      worst_all = std::max(worst_all, w);
    }
    return Outcome{worst_all <= 1e-4, detail + fmt("worst %.3g", worst_all)};
  });

  criterion(6, "error decreases with N (sphere d = 3, 50 runs)", 300, [] {
    SweepConfig cfg;
    cfg.dims = {3};
    cfg.samples = {100, 500, 2000, 5000};
    cfg.runs = 50;
    cfg.seed = 6;
    std::size_t failed = 0;
    const std::vector<double> med = medians(run_error_sweep(cfg), &failed);
    bool decreasing = true;
    for (std::size_t i = 1; i < med.size(); ++i) decreasing = decreasing && med[i] < med[i - 1];
    const double slope = loglog_slope({100, 500, 2000, 5000}, med);
    return Outcome{decreasing && slope <= -0.2 && failed == 0,
                   "medians " + join(med) + fmt(", slope %.3f", slope) + fmt(", failed runs %.0f", double(failed))};
  });

  criterion(7, "threshold in M at N = 5000 (sphere d = 3, 50 runs)", 300, [] {
    SweepConfig cfg;
    cfg.dims = {3};
    cfg.samples = {5000};
    cfg.basis = BasisRule::explicit_values({5, 212, 848});
    cfg.runs = 50;
    cfg.seed = 7;
    std::size_t failed = 0;
    const std::vector<double> med = medians(run_error_sweep(cfg), &failed);  // ordered by M
    const double plateau_ratio = std::max(med[1], med[2]) / std::min(med[1], med[2]);
    const double pre = med[0] / med[2];
    return Outcome{plateau_ratio <= 1.5 && pre >= 2.0 && failed == 0,
                   "medians M=5,212,848: " + join(med) + fmt(", 212/848 spread %.3f", plateau_ratio) +
                       fmt(", M=5 over plateau %.1fx", pre)};
  });

  criterion(8, "trajectory d = 10, 200 iterations", 120, [] {
    const TrajectoryResult r = run_trajectory(TrajectoryConfig{});
    for (const auto& t : r.traces) require_completed(t);
    const double eg = r.find(Method::Euclidean)->final_loss();
    const double wng = r.find(Method::ExactWNG)->final_loss();
    const double kw = r.find(Method::KWNG)->final_loss();
    // Both natural methods can reach the loss floor; differences below
    // round-off of the Bures loss are not resolvable.
    const double floor = 1e-12 * r.find(Method::ExactWNG)->records.front().loss;
    const bool ok = wng < 0.1 * eg && kw < 0.1 * eg && kw <= 3.0 * std::max(wng, floor);
    const double w50 = r.find(Method::ExactWNG)->records[50].loss;
    const double k50 = r.find(Method::KWNG)->records[50].loss;
    return Outcome{ok, fmt("final EG %.4g", eg) + fmt(", WNG %.3g", wng) + fmt(", KWNG %.3g", kw) +
                           fmt("; at t=50 WNG %.3g", w50) + fmt(", KWNG %.3g", k50) +
                           fmt("; projected gap %.3g", projected_gap(r.projections[1], r.projections[2])) +
                           fmt(" vs extent %.3g", projected_extent(r.projections[1]))};
  });

  criterion(9, "invariance, deviation ratio per halving in [0.3, 0.7]", 60, [] {
    const InvarianceReport rep = run_invariance(InvarianceConfig{});
    bool ok = rep.ratios.size() == 2;
    for (double x : rep.ratios) ok = ok && x >= 0.3 && x <= 0.7;
    return Outcome{ok, "deviations " + join(rep.deviations) + ", ratios " + join(rep.ratios)};
  });

  criterion(10, "bandwidth robustness, sphere d = 2, sigma in [0.1, 10]", 120, [] {
    SweepConfig cfg;
    cfg.dims = {2};
    cfg.samples = {5000};
    cfg.runs = 30;
    cfg.seed = 10;
    cfg.estimator.epsilon = 1e-10;
    cfg.estimator.lambda = 1e-10;
    std::size_t failed = 0;
    const std::vector<double> med = medians(run_bandwidth_sweep(cfg, logspace(-1, 1, 5)), &failed);
    const double spread = *std::max_element(med.begin(), med.end()) / *std::min_element(med.begin(), med.end());
    return Outcome{spread < 10.0 && failed == 0, "medians " + join(med) + fmt(", max/min %.2f", spread)};
  });

  criterion(11, "LM thresholds and clipping (deep-learning results excluded)", 1, [] {
    LMState s{1e-5, 0.85, 5, {}};
    bool ok = std::abs(lm_update(s, 0.9).epsilon - 8.5e-6) < 1e-20;
    ok = ok && lm_update(s, 0.5).epsilon == 1e-5;
    ok = ok && std::abs(lm_update(s, 0.1).epsilon - 1e-5 / 0.85) < 1e-20;
    const Vector c = clip_by_norm({Eigen::Vector2d(3, 4), GradientKind::NaturalKWNG}, 1.0).values;
    ok = ok && std::abs(c(0) - 0.6) < 1e-15 && std::abs(c(1) - 0.8) < 1e-15;
    const Vector same = clip_by_norm({Eigen::Vector2d(0.3, 0.4), GradientKind::NaturalKWNG}, 1.0).values;
    ok = ok && same == Eigen::Vector2d(0.3, 0.4);
    return Outcome{ok, "CIFAR-10/100 tables and the classification, timing and damping-ablation figures need a "
                       "deep-learning stack and are not reproduced"};
  });

  std::printf("%s: %d failing criteria\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
