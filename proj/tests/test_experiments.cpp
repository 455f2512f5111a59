#include <gtest/gtest.h>

#include <sstream>

#include "kwng/experiments/instances.hpp"
#include "kwng/experiments/invariance.hpp"
#include "kwng/experiments/io.hpp"
#include "kwng/experiments/selftest.hpp"
#include "kwng/experiments/svg.hpp"
#include "kwng/experiments/sweep.hpp"
#include "kwng/experiments/trajectory.hpp"
#include "support.hpp"

using namespace kwng;
using namespace kwng::experiments;

namespace {

SweepConfig small_sweep() {
  SweepConfig cfg;
  cfg.dims = {2};
  cfg.samples = {200};
  cfg.runs = 4;
  cfg.seed = 17;
  return cfg;
}

std::string csv_of(const std::vector<ExperimentRecord>& records) {
  std::ostringstream os;
  write_records_csv(os, records);
  return os.str();
}

// Checks that every element opened in the document is closed in order.
bool well_formed(const std::string& doc) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = doc.find('<', pos)) != std::string::npos) {
    const std::size_t end = doc.find('>', pos);
    if (end == std::string::npos) return false;
    const std::string tag = doc.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
    } else if (tag.back() != '/') {
      stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
    }
  }
  return stack.empty();
}

}  // namespace

TEST(Csv, HeaderAndLineEndings) {
  const auto records = run_error_sweep(small_sweep());
  const std::string text = csv_of(records);
  EXPECT_EQ(text.substr(0, text.find('\n')), "run_id,model,d,q,N,M,sigma0,eps,lambda,rel_error,wall_seconds");
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(records.size() + 1));
}

TEST(Csv, RoundTripIsExact) {
  ExperimentRecord r;
  r.run_id = 7;
  r.model = "sphere";
  r.d = 3;
  r.q = 4;
  r.n = 5000;
  r.m = 212;
  r.sigma0 = 0.1;
  r.epsilon = 1e-5;
  r.lambda = 0.0;
  r.rel_error = 1.0 / 3.0;
  r.wall_seconds = 0.123456789012345678;
  ExperimentRecord failed = r;
  failed.failed = true;
  std::istringstream is(csv_of({r, failed}));
  const auto back = read_records_csv(is);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].rel_error, r.rel_error);
  EXPECT_EQ(back[0].sigma0, r.sigma0);
  EXPECT_EQ(back[0].wall_seconds, r.wall_seconds);
  EXPECT_EQ(back[0].m, 212);
  EXPECT_TRUE(back[1].failed);
  EXPECT_EQ(format_real(1.0 / 3.0), "0.33333333333333331");
  EXPECT_EQ(format_real(std::nan("")), "nan");
}

TEST(Csv, RejectsMalformed) {
  std::istringstream bad_header("run_id,model\n");
  EXPECT_EQ(test::code_of([&] { read_records_csv(bad_header); }), ErrorCode::InvalidArgument);
  std::istringstream bad_row(std::string(kCsvHeader) + "\n1,sphere,3\n");
  EXPECT_EQ(test::code_of([&] { read_records_csv(bad_row); }), ErrorCode::InvalidArgument);
}

TEST(Config, ParsesAndOverrides) {
  std::istringstream is("# comment\nmodel = sphere\n\n  runs=3 \nruns = 5\nbandwidth = fixed:1\n");
  const auto cfg = parse_config(is);
  EXPECT_EQ(cfg.at("model"), "sphere");
  EXPECT_EQ(cfg.at("runs"), "5");
  EXPECT_EQ(cfg.at("bandwidth"), "fixed:1");
  std::istringstream bad("runs 3\n");
  EXPECT_EQ(test::code_of([&] { parse_config(bad); }), ErrorCode::InvalidArgument);
}

TEST(Sweep, BasisRule) {
  EXPECT_EQ(BasisRule::d_sqrt_n().resolve(3, 5000), std::vector<Eigen::Index>{212});
  EXPECT_EQ(BasisRule::d_sqrt_n(4).resolve(3, 5000), std::vector<Eigen::Index>{848});
  EXPECT_EQ(BasisRule::explicit_values({5, 10}).resolve(3, 5000), (std::vector<Eigen::Index>{5, 10}));
}

TEST(Sweep, ReproduciblePerSeed) {
  SweepConfig cfg = small_sweep();
  const auto a = run_error_sweep(cfg);
  const auto b = run_error_sweep(cfg);
  cfg.threads = 3;
  const auto c = run_error_sweep(cfg);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_FALSE(a[i].failed) << a[i].error;
    EXPECT_EQ(a[i].run_id, i);
    EXPECT_EQ(format_real(a[i].rel_error), format_real(b[i].rel_error));
    EXPECT_EQ(a[i].rel_error, c[i].rel_error);
  }
  cfg.seed = 18;
  EXPECT_NE(run_error_sweep(cfg)[0].rel_error, a[0].rel_error);
}

TEST(Sweep, BandwidthGridPointMatchesErrorSweep) {
  const SweepConfig cfg = small_sweep();
  const auto a = run_error_sweep(cfg);
  const auto b = run_bandwidth_sweep(cfg, {1.0});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].rel_error, b[i].rel_error);
}

TEST(Sweep, TinyBandwidthStaysFinite) {
  SweepConfig cfg = small_sweep();
  cfg.estimator.epsilon = 1e-10;
  cfg.estimator.lambda = 1e-10;
  const auto records = run_bandwidth_sweep(cfg, {1e-6, 1.0});
  for (const auto& r : records) {
    EXPECT_FALSE(r.failed) << r.error;
    EXPECT_TRUE(std::isfinite(r.rel_error));
  }
  const auto cells = summarize(records);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_GT(cells[0].median, cells[1].median);  // sigma0 = 1e-6 sorts first
}

TEST(Sweep, OracleUnavailable) {
  SweepConfig cfg = small_sweep();
  cfg.model = ModelKind::LogNormal;
  EXPECT_EQ(test::code_of([&] { run_error_sweep(cfg); }), ErrorCode::OracleUnavailable);
  cfg.dims = {1};
  cfg.runs = 1;
  EXPECT_FALSE(run_error_sweep(cfg)[0].failed);
}

TEST(Sweep, Validation) {
  SweepConfig cfg = small_sweep();
  cfg.runs = 0;
  EXPECT_EQ(test::code_of([&] { run_error_sweep(cfg); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(test::code_of([] { parse_model("mixture"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(parse_model("lognormal"), ModelKind::LogNormal);
}

TEST(Summary, QuantilesAndSlope) {
  std::vector<ExperimentRecord> records;
  for (int i = 1; i <= 5; ++i) {
    ExperimentRecord r;
    r.d = 3;
    r.n = 100;
    r.m = 30;
    r.rel_error = i;
    records.push_back(r);
  }
  records.back().failed = true;
  const auto cells = summarize(records);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].count, 4u);
  EXPECT_EQ(cells[0].failures, 1u);
  EXPECT_DOUBLE_EQ(cells[0].median, 2.5);
  EXPECT_DOUBLE_EQ(cells[0].q1, 1.75);
  EXPECT_NEAR(loglog_slope({100, 500, 2000, 5000}, {0.1, 0.1 / std::sqrt(5.0), 0.1 / std::sqrt(20.0), 0.1 / std::sqrt(50.0)}),
              -0.5, 1e-12);
  const auto grid = logspace(-2, 2, 9);
  EXPECT_EQ(grid.size(), 9u);
  EXPECT_NEAR(grid[4], 1.0, 1e-15);
}

TEST(Instances, DerivedStreamsAndVariance) {
  Rng a = derive_rng({1, 2, 3}), b = derive_rng({1, 2, 3}), c = derive_rng({1, 2, 4});
  EXPECT_EQ(a(), b());
  EXPECT_NE(derive_rng({1, 2, 3})(), c());
  Rng rng(3);
  const Vector v = centered_normal(rng, 200000);
  EXPECT_NEAR(v.squaredNorm() / 200000.0, 0.1, 0.003);
  const GaussianParams p = random_gaussian_params(4, rng);
  EXPECT_TRUE(is_positive_definite(p.sigma()));
}

TEST(Svg, WellFormed) {
  Chart c{"t <&>", "x", "y", true, true, {}};
  Series s;
  s.name = "a";
  s.x = {1, 10, 100};
  s.y = {1, 0.1, std::nan("")};
  s.lo = {0.5, 0.05, 0.0};
  s.hi = {2, 0.2, 0.0};
  c.series.push_back(s);
  const std::string doc = render_svg(c);
  EXPECT_EQ(doc.rfind("<svg", 0) == 0 || doc.rfind("<?xml", 0) == 0, true);
  EXPECT_NE(doc.find("</svg>"), std::string::npos);
  EXPECT_EQ(doc.find("nan"), std::string::npos);
  EXPECT_NE(doc.find("&lt;&amp;&gt;"), std::string::npos);
  EXPECT_TRUE(well_formed(doc));
  const std::string box = render_box_svg("b", "d", "err", {{"1", {0.1, 0.2, 0.3}}, {"2", {0.2, 0.4}}}, true);
  EXPECT_TRUE(well_formed(box));
}

TEST(Trajectory, FullRun) {
  TrajectoryConfig cfg;
  const TrajectoryResult r = run_trajectory(cfg);
  const DescentTrace* eg = r.find(Method::Euclidean);
  const DescentTrace* wng = r.find(Method::ExactWNG);
  const DescentTrace* kwng = r.find(Method::KWNG);
  ASSERT_TRUE(eg && wng && kwng);
  for (const auto* t : {eg, wng, kwng}) {
    EXPECT_EQ(t->status, DescentStatus::Completed);
    EXPECT_EQ(t->records.size(), 201u);
  }
  EXPECT_LT(wng->records[100].loss, eg->records[100].loss);
  // KWNG stays in a tube around the WNG path on the principal plane.
  const double extent = projected_extent(r.projections[1]);
  EXPECT_GT(extent, 0.0);
  EXPECT_LT(projected_gap(r.projections[1], r.projections[2]), 0.2 * extent);

  std::ostringstream os;
  write_trajectory_csv(os, r);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "method,iteration,loss,pc1,pc2,epsilon,step");
  EXPECT_TRUE(well_formed(render_svg(trajectory_loss_chart(r))));
  EXPECT_TRUE(well_formed(render_svg(trajectory_projection_chart(r))));
}

TEST(Trajectory, DeterministicPerSeed) {
  TrajectoryConfig cfg;
  cfg.d = 4;
  cfg.steps = 20;
  cfg.methods = {Method::ExactWNG, Method::ExactWNG, Method::KWNG};
  const TrajectoryResult a = run_trajectory(cfg);
  const TrajectoryResult b = run_trajectory(cfg);
  for (std::size_t i = 0; i <= cfg.steps; ++i) {
    EXPECT_EQ(a.traces[0].records[i].theta, a.traces[1].records[i].theta);
    EXPECT_EQ(a.traces[2].records[i].theta, b.traces[2].records[i].theta);
  }
}

TEST(InvarianceReportTest, ConditionOneIsExact) {
  InvarianceConfig cfg;
  cfg.condition = 1.0;
  const InvarianceReport rep = run_invariance(cfg);
  for (double dev : rep.deviations) EXPECT_LE(dev, 1e-12);
}

TEST(InvarianceReportTest, EuclideanIsNotInvariant) {
  InvarianceConfig cfg;
  const InvarianceReport wng = run_invariance(cfg);
  cfg.method = Method::Euclidean;
  const InvarianceReport eg = run_invariance(cfg);
  for (std::size_t i = 0; i < eg.ratios.size(); ++i) {
    EXPECT_GT(eg.ratios[i], 0.9);
    EXPECT_GT(eg.deviations[i + 1], 10.0 * wng.deviations[i + 1]);
  }
  cfg.method = Method::KWNG;
  EXPECT_EQ(test::code_of([&] { run_invariance(cfg); }), ErrorCode::InvalidArgument);
}

TEST(InvarianceReportTest, CubicMapInverts) {
  const CubicReparam r = CubicReparam::with_condition(5, 1e3);
  EXPECT_NEAR(r.a.maxCoeff() / r.a.minCoeff(), 1e3, 1e-9);
  Rng rng(4);
  const Vector theta = standard_normal(rng, 5);
  EXPECT_LE((r.inverse(r.apply(theta)) - theta).norm(), 1e-13);
}

TEST(Selftest, AllSuitesPass) {
  SelftestOptions opt;
  opt.instances = 50;
  opt.probes = 30;
  const auto results = run_selftest(opt);
  EXPECT_EQ(results.size(), selftest_suite_names().size());
  for (const auto& r : results) EXPECT_TRUE(r.passed) << describe(r);
}

TEST(Selftest, FilterAndMutation) {
  SelftestOptions opt;
  opt.filter = "metric";
  const auto only = run_selftest(opt);
  ASSERT_EQ(only.size(), 1u);
  EXPECT_EQ(only[0].name, "metric");

  opt.filter = "finite-difference";
  opt.assemble_k = [](const NystromBasis& b, const KernelSpec& k, double s) {
    Matrix m = assemble_K(b, k, s);
    m(0, 0) *= 1.01;
    return m;
  };
  const auto mutated = run_selftest(opt);
  ASSERT_EQ(mutated.size(), 1u);
  EXPECT_FALSE(mutated[0].passed);

  opt.filter = "nosuch";
  EXPECT_EQ(test::code_of([&] { run_selftest(opt); }), ErrorCode::InvalidArgument);
}
