// Command-line front end for the sweeps, trajectory, invariance and
// self-test experiments.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "kwng/experiments/instances.hpp"
#include "kwng/experiments/invariance.hpp"
#include "kwng/experiments/io.hpp"
#include "kwng/experiments/selftest.hpp"
#include "kwng/experiments/svg.hpp"
#include "kwng/experiments/sweep.hpp"
#include "kwng/experiments/trajectory.hpp"

namespace {

using namespace kwng;
using namespace kwng::experiments;

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitSelftest = 3;

struct Options {
  std::string model = "sphere";
  std::vector<long> dims;
  std::vector<long> samples;
  std::string basis;
  std::string kernel = "gaussian";
  double sigma0 = 1.0;
  double rq_alpha = 1.0;
  std::string bandwidth;
  double eps = 0.0;
  double lambda = 0.0;
  std::string damping = "ttildecols";
  std::string clip = "off";
  int runs = 20;
  std::uint64_t seed = 0;
  std::string out;
  std::string plot;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string config;
};

bool given(const CLI::App& app, const std::string& name) { return app.get_option(name)->count() > 0; }

/// Config entries fill options that were not given on the command line.
void apply_config(CLI::App& app, const std::map<std::string, std::string>& entries) {
  for (const auto& [key, value] : entries) {
    CLI::Option* opt = nullptr;
    try {
      opt = app.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw CLI::ValidationError("config", "unknown key '" + key + "'");
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

std::vector<Eigen::Index> to_index(const std::vector<long>& v) { return {v.begin(), v.end()}; }

BasisRule parse_basis(const std::string& text) {
  if (text == "dsqrtn") return BasisRule::d_sqrt_n();
  std::vector<Eigen::Index> values;
  for (const auto& part : split(text, ',')) {
    try {
      std::size_t used = 0;
      const long m = std::stol(part, &used);
      if (used != part.size() || m < 1) throw std::invalid_argument(part);
      values.push_back(m);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument, "--basis expects 'dsqrtn' or a list of positive integers");
    }
  }
  return BasisRule::explicit_values(values);
}

EstimatorConfig estimator_from(const Options& o) {
  EstimatorConfig e;
  e.epsilon = o.eps;
  e.lambda = o.lambda;
  e.damping = parse_damping(o.damping);
  if (o.clip != "off") {
    try {
      e.clip_norm = std::stod(o.clip);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument, "--clip expects a positive number or 'off'");
    }
  }
  validate(e);
  return e;
}

KernelSpec kernel_from(const Options& o) {
  KernelSpec k;
  k.family = parse_kernel_family(o.kernel);
  k.sigma0 = o.sigma0;
  k.rq_alpha = o.rq_alpha;
  k.bandwidth = parse_bandwidth(o.bandwidth);
  validate(k);
  return k;
}

void print_summary(std::ostream& os, const std::vector<ExperimentRecord>& records) {
  os << std::setw(4) << "d" << std::setw(8) << "N" << std::setw(7) << "M" << std::setw(11) << "sigma0"
     << std::setw(6) << "runs" << std::setw(6) << "fail" << std::setw(13) << "q1" << std::setw(13) << "median"
     << std::setw(13) << "q3" << '\n';
  for (const auto& c : summarize(records)) {
    os << std::setw(4) << c.key.d << std::setw(8) << c.key.n << std::setw(7) << c.key.m << std::setw(11)
       << c.key.sigma0 << std::setw(6) << c.count << std::setw(6) << c.failures << std::setw(13) << c.q1
       << std::setw(13) << c.median << std::setw(13) << c.q3 << '\n';
  }
}

enum class SweepKind { N, M, D, Bandwidth };

Chart sweep_chart(SweepKind kind, const std::vector<ExperimentRecord>& records) {
  Chart c;
  c.title = "Relative error of the kernel estimate";
  c.ylabel = "relative error (median, quartile bars)";
  c.log_y = true;
  c.log_x = true;
  std::map<std::string, Series> by_series;
  for (const auto& s : summarize(records)) {
    double x = 0.0;
    std::string name;
    switch (kind) {
      case SweepKind::N: x = static_cast<double>(s.key.n); name = "d=" + std::to_string(s.key.d); break;
      case SweepKind::M:
        x = static_cast<double>(s.key.m);
        name = "d=" + std::to_string(s.key.d) + " N=" + std::to_string(s.key.n);
        break;
      case SweepKind::D: x = static_cast<double>(s.key.d); name = "N=" + std::to_string(s.key.n); break;
      case SweepKind::Bandwidth: x = s.key.sigma0; name = "d=" + std::to_string(s.key.d); break;
    }
    Series& ser = by_series[name];
    ser.name = name;
    ser.x.push_back(x);
    ser.y.push_back(s.median);
    ser.lo.push_back(s.q1);
    ser.hi.push_back(s.q3);
  }
  for (auto& [_, s] : by_series) c.series.push_back(std::move(s));
  switch (kind) {
    case SweepKind::N: c.xlabel = "samples N"; break;
    case SweepKind::M: c.xlabel = "basis size M"; break;
    case SweepKind::D: c.xlabel = "dimension d"; c.log_x = false; break;
    case SweepKind::Bandwidth: c.xlabel = "bandwidth sigma"; break;
  }
  return c;
}

int run_sweep(SweepKind kind, const CLI::App& app, const Options& o, const std::vector<double>& sigma_grid) {
  SweepConfig cfg;
  cfg.model = parse_model(o.model);
  const bool bw = kind == SweepKind::Bandwidth;
  cfg.dims = to_index(o.dims);
  if (cfg.dims.empty()) {
    if (kind == SweepKind::D) {
      for (Eigen::Index d = 1; d <= 10; ++d) cfg.dims.push_back(d);
    } else {
      cfg.dims = {bw ? 2 : 3};
    }
  }
  cfg.samples = to_index(o.samples);
  if (cfg.samples.empty()) cfg.samples = kind == SweepKind::N ? std::vector<Eigen::Index>{100, 500, 2000, 5000}
                                                               : std::vector<Eigen::Index>{5000};
  std::string basis = o.basis;
  if (basis.empty()) basis = kind == SweepKind::M ? "5,10,20,50,106,212,424,848" : "dsqrtn";
  cfg.basis = parse_basis(basis);
  Options eo = o;
  if (!given(app, "--eps")) eo.eps = bw ? 1e-10 : 1e-5;
  if (!given(app, "--lambda")) eo.lambda = bw ? 1e-10 : 0.0;
  if (eo.bandwidth.empty()) eo.bandwidth = "fixed:1";
  cfg.estimator = estimator_from(eo);
  cfg.kernel = kernel_from(eo);
  cfg.runs = o.runs;
  cfg.seed = o.seed;
  cfg.threads = o.threads;

  const auto records = bw ? run_bandwidth_sweep(cfg, sigma_grid) : run_error_sweep(cfg);
  if (o.out.empty()) {
    write_records_csv(std::cout, records);
  } else {
    write_records_csv(o.out, records);
  }
  print_summary(std::cerr, records);
  if (!o.plot.empty()) {
    if (kind == SweepKind::D) {
      std::vector<BoxGroup> groups;
      for (auto d : cfg.dims) {
        BoxGroup g{std::to_string(d), {}};
        for (const auto& r : records)
          if (r.d == d && !r.failed) g.values.push_back(r.rel_error);
        groups.push_back(std::move(g));
      }
      write_text_file(o.plot, render_box_svg("Relative error by dimension", "dimension d", "relative error", groups, true));
    } else {
      write_text_file(o.plot, render_svg(sweep_chart(kind, records)));
    }
  }
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.failed ? 1 : 0;
  if (failed > 0) {
    std::cerr << failed << " of " << records.size() << " runs failed\n";
    for (const auto& r : records)
      if (r.failed) {
        std::cerr << "run " << r.run_id << ": " << r.error << '\n';
        break;
      }
    return kExitNumerical;
  }
  return 0;
}

int run_trajectory_cmd(const CLI::App& app, const Options& o, std::size_t steps, bool adapt, const std::string& pca_plot) {
  TrajectoryConfig cfg;
  const auto dims = to_index(o.dims);
  if (dims.size() > 1) throw Error(ErrorCode::InvalidArgument, "trajectory takes a single --dim");
  if (!dims.empty()) cfg.d = dims.front();
  const auto samples = to_index(o.samples);
  if (samples.size() > 1) throw Error(ErrorCode::InvalidArgument, "trajectory takes a single --samples");
  if (!samples.empty()) cfg.samples = samples.front();
  if (!o.basis.empty()) {
    const BasisRule rule = parse_basis(o.basis);
    const auto m = rule.resolve(cfg.d, cfg.samples);
    if (m.size() != 1) throw Error(ErrorCode::InvalidArgument, "trajectory takes a single --basis");
    cfg.basis = m.front();
  }
  Options eo = o;
  if (!given(app, "--eps")) eo.eps = 1e-10;
  if (eo.bandwidth.empty()) eo.bandwidth = "meansq";
  cfg.estimator = estimator_from(eo);
  cfg.kernel = kernel_from(eo);
  cfg.steps = steps;
  cfg.adapt_epsilon = adapt;
  cfg.seed = o.seed;

  const TrajectoryResult r = run_trajectory(cfg);
  if (o.out.empty()) {
    write_trajectory_csv(std::cout, r);
  } else {
    std::ofstream os(o.out, std::ios::binary);
    if (!os) throw Error(ErrorCode::InvalidArgument, "cannot open " + o.out);
    write_trajectory_csv(os, r);
  }
  if (!o.plot.empty()) write_text_file(o.plot, render_svg(trajectory_loss_chart(r)));
  if (!pca_plot.empty()) write_text_file(pca_plot, render_svg(trajectory_projection_chart(r)));
  int rc = 0;
  for (const auto& t : r.traces) {
    std::cerr << std::setw(5) << to_string(t.method) << "  initial loss " << t.records.front().loss << "  final loss "
              << t.final_loss() << "  iterations " << t.records.size() - 1 << '\n';
    if (t.status == DescentStatus::Diverged) {
      std::cerr << "  " << to_string(ErrorCode::DivergenceDetected) << ": " << t.message << '\n';
      rc = kExitNumerical;
    }
  }
  return rc;
}

int run_invariance_cmd(const Options& o, const std::vector<double>& gammas, double condition, double horizon,
                       const std::string& method) {
  InvarianceConfig cfg;
  const auto dims = to_index(o.dims);
  if (dims.size() > 1) throw Error(ErrorCode::InvalidArgument, "invariance takes a single --dim");
  if (!dims.empty()) cfg.d = dims.front();
  cfg.gammas = gammas;
  cfg.condition = condition;
  cfg.horizon = horizon;
  cfg.seed = o.seed;
  if (method == "wng") {
    cfg.method = Method::ExactWNG;
  } else if (method == "eg") {
    cfg.method = Method::Euclidean;
  } else {
    throw Error(ErrorCode::InvalidArgument, "--method expects wng or eg");
  }
  const InvarianceReport rep = run_invariance(cfg);
  std::ostringstream csv;
  csv << "gamma,deviation,ratio,order\n";
  for (std::size_t i = 0; i < rep.gammas.size(); ++i) {
    csv << format_real(rep.gammas[i]) << ',' << format_real(rep.deviations[i]) << ','
        << (i == 0 ? std::string() : format_real(rep.ratios[i - 1])) << ','
        << (i == 0 ? std::string() : format_real(rep.orders[i - 1])) << '\n';
  }
  if (o.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text_file(o.out, csv.str());
  }
  if (!o.plot.empty()) {
    Chart c{"Deviation from the reparametrized flow", "step size gamma", "max deviation", true, true, {}};
    c.series.push_back({method, rep.gammas, rep.deviations, {}, {}, true, true});
    write_text_file(o.plot, render_svg(c));
  }
  return 0;
}

int run_selftest_cmd(const Options& o, const std::string& filter, bool corrupt_k) {
  SelftestOptions opt;
  opt.filter = filter;
  opt.seed = o.seed;
  if (corrupt_k) {
    opt.assemble_k = [](const NystromBasis& b, const KernelSpec& k, double s) {
      Matrix m = assemble_K(b, k, s);
      m(0, 0) *= 1.01;
      return m;
    };
  }
  bool ok = true;
  for (const auto& r : run_selftest(opt)) {
    std::cout << describe(r) << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : kExitSelftest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernelized Wasserstein natural gradient experiments"};
  app.footer(
      "Relative error is ||g_hat - g*|| / ||g*||, with g_hat the kernel estimate and g* the exact natural\n"
      "gradient for the same parameter and Euclidean gradient.\n"
      "Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 selftest failure.");
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--model", o.model, "gaussian, lognormal or sphere")->capture_default_str();
  app.add_option("--dim", o.dims, "sample-space dimensions (comma separated)")->delimiter(',');
  app.add_option("--samples", o.samples, "sample counts N (comma separated)")->delimiter(',');
  app.add_option("--basis", o.basis, "basis sizes M (comma separated) or dsqrtn for floor(d sqrt(N))");
  app.add_option("--kernel", o.kernel, "gaussian or rq")->capture_default_str();
  app.add_option("--sigma0", o.sigma0, "bandwidth scale")->capture_default_str();
  app.add_option("--rq-alpha", o.rq_alpha, "rational-quadratic shape")->capture_default_str();
  app.add_option("--bandwidth", o.bandwidth, "fixed:<v>, meansq or median (sweeps: fixed:1, trajectory: meansq)");
  app.add_option("--eps", o.eps, "damping strength epsilon (sweeps 1e-5; bandwidth sweep and trajectory 1e-10)");
  app.add_option("--lambda", o.lambda, "ridge lambda (0; bandwidth sweep 1e-10)");
  app.add_option("--damping", o.damping, "identity, tcols or ttildecols")->capture_default_str();
  app.add_option("--clip", o.clip, "clip the estimate to this norm, or off")->capture_default_str();
  app.add_option("--runs", o.runs, "repetitions per cell")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "master seed")->capture_default_str();
  app.add_option("--out", o.out, "CSV output path (default: stdout)");
  app.add_option("--plot", o.plot, "SVG output path");
  app.add_option("--threads", o.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--config", o.config, "file of 'key = value' lines; command-line flags take precedence");

  auto* sweep_n = app.add_subcommand("sweep-n", "relative error against the sample count N");
  auto* sweep_m = app.add_subcommand("sweep-m", "relative error against the basis size M");
  auto* sweep_d = app.add_subcommand("sweep-d", "relative error against the dimension d");
  auto* sweep_bw = app.add_subcommand("sweep-bandwidth", "relative error against a fixed bandwidth grid");
  std::vector<double> sigma_grid = logspace(-2, 2, 9);
  sweep_bw->add_option("--sigma-grid", sigma_grid, "bandwidth values (comma separated)")->delimiter(',');

  auto* traj = app.add_subcommand("trajectory", "Gaussian fit under the Bures loss with EG, WNG and KWNG");
  std::size_t steps = 200;
  bool adapt = false;
  std::string pca_plot;
  traj->add_option("--steps", steps, "iterations")->capture_default_str();
  traj->add_flag("--adapt-eps", adapt, "adapt epsilon with the reduction-ratio rule");
  traj->add_option("--pca-plot", pca_plot, "SVG path for the projected iterates");

  auto* inv = app.add_subcommand("invariance", "reparametrization invariance of the natural-gradient flow");
  std::vector<double> gammas{1e-2, 5e-3, 2.5e-3};
  double condition = 1e3;
  double horizon = 1.0;
  std::string method = "wng";
  inv->add_option("--gammas", gammas, "step sizes (comma separated)")->delimiter(',');
  inv->add_option("--condition", condition, "condition number of the reparametrization")->capture_default_str();
  inv->add_option("--horizon", horizon, "flow time; steps = horizon / gamma")->capture_default_str();
  inv->add_option("--method", method, "wng or eg")->capture_default_str();

  auto* self = app.add_subcommand("selftest", "invariant suites: oracle, representation, stable, finite-difference, metric");
  std::string filter;
  bool corrupt_k = false;
  self->add_option("--filter", filter, "run a single suite");
  self->add_flag("--corrupt-k", corrupt_k, "perturb the K assembly (checks that the suite catches it)");

  try {
    app.parse(argc, argv);
    if (!o.config.empty()) apply_config(app, read_config_file(o.config));
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  } catch (const kwng::Error& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*sweep_n) return run_sweep(SweepKind::N, app, o, {});
    if (*sweep_m) return run_sweep(SweepKind::M, app, o, {});
    if (*sweep_d) return run_sweep(SweepKind::D, app, o, {});
    if (*sweep_bw) return run_sweep(SweepKind::Bandwidth, app, o, sigma_grid);
    if (*traj) return run_trajectory_cmd(app, o, steps, adapt, pca_plot);
    if (*inv) return run_invariance_cmd(o, gammas, condition, horizon, method);
    if (*self) return run_selftest_cmd(o, filter, corrupt_k);
  } catch (const kwng::Error& e) {
    std::cerr << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::InvalidArgument:
      case ErrorCode::DimensionMismatch:
      case ErrorCode::DimensionUnsupported:
      case ErrorCode::OracleUnavailable: return kExitUsage;
      default: return kExitNumerical;
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}
