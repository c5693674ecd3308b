#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "pathsde/experiments.hpp"

using namespace pathsde;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pathsde_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(RelativeError, ExactNodesGiveZero) {
  const auto p = make_problem("gbm-0.1-1.2");
  Trajectory traj(p, "fixed", StepperKind::explicit_euler);
  double w = 0.0;
  const double dws[] = {0.3, -0.1, 0.4, -0.2};
  for (int k = 0; k < 4; ++k) {
    w += dws[k];
    traj.append(0.25, Vec{dws[k]}, Vec{gbm_exact(0.1, 1.2, 1.0, 0.25 * (k + 1), w)});
  }
  EXPECT_NEAR(relative_error(traj, p), 0.0, 1e-15);
}

TEST(RelativeError, DoubledFinalNodeGivesOne) {
  // one step with y1 = 2 y(tau_1) and y(tau_1) the largest exact value
  const auto p = make_problem("gbm-0.1-1.2");
  Trajectory traj(p, "fixed", StepperKind::explicit_euler);
  const double exact = gbm_exact(0.1, 1.2, 1.0, 1.0, 0.8);
  ASSERT_GT(exact, 1.0);
  traj.append(1.0, Vec{0.8}, Vec{2.0 * exact});
  EXPECT_NEAR(relative_error(traj, p), 1.0, 1e-15);
}

TEST(RelativeError, IndependentReimplementation) {
  const auto p = make_problem("gbm-0.1-1.2");
  RngStream rng(2718, 3);
  const auto traj = integrate(p, FixedStep{1.0 / 1000}, StepperKind::explicit_euler, rng);
  ASSERT_EQ(traj.steps(), 1000u);

  // straight-line Euler-Maruyama and error on the recorded increments
  const double mu = 0.1, sigma = 1.2;
  double y = 1.0, w = 0.0, worst = 0.0, z = 1.0;
  for (std::size_t n = 0; n < 1000; ++n) {
    const double dt = traj.times()[n + 1] - traj.times()[n];
    const double dw = traj.record().increment(n)[0];
    y = y + mu * y * dt + sigma * y * dw;
    w += dw;
    const double exact = std::exp((mu - 0.5 * sigma * sigma) * traj.times()[n + 1] + sigma * w);
    worst = std::max(worst, std::abs(y - exact));
    z = std::max(z, std::abs(exact));
  }
  EXPECT_NEAR(relative_error(traj, p), worst / z, 1e-12 * worst / z);
}

TEST(RelativeError, NeedsExactSolution) {
  const SdeProblem p("no-exact", {linear_scalar_field(1, 0.1), linear_scalar_field(1, 0.3)},
                     1.0, Vec{1.0});
  RngStream rng(1, 0);
  const auto traj = integrate(p, FixedStep{0.5}, StepperKind::explicit_euler, rng);
  EXPECT_THROW(relative_error(traj, p), SdeError);
}

TEST(RunExperiment, SingleSampleIsReproducible) {
  ExperimentConfig cfg;
  cfg.samples = 1;
  cfg.n_list = {10};
  cfg.seed = 99;
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(stats_csv(a), stats_csv(b));
  EXPECT_EQ(a[0].mean_steps, 10.0);
  EXPECT_EQ(a[0].samples, 1u);
}

TEST(RunExperiment, FixedStepCounts) {
  ExperimentConfig cfg;
  cfg.samples = 50;
  cfg.n_list = {16, 64};
  const auto rows = run_experiment(cfg);
  for (const auto& r : rows) {
    EXPECT_EQ(r.mean_steps, r.n);
    EXPECT_EQ(r.sigma_steps, 0.0);
    EXPECT_EQ(r.failures, 0u);
    EXPECT_GE(r.e2, 0.0);
    EXPECT_GE(r.sigma_e, 0.0);
  }
}

TEST(RunExperiment, OutputIndependentOfThreadCount) {
  ExperimentConfig cfg;
  cfg.method = Method::adaptive2;
  cfg.samples = 40;
  cfg.n_list = {16, 32};
  cfg.threads = 1;
  const auto one = run_experiment(cfg);
  cfg.threads = 4;
  const auto four = run_experiment(cfg);
  EXPECT_EQ(stats_csv(one), stats_csv(four));
  EXPECT_EQ(scatter_csv(one), scatter_csv(four));
}

TEST(RunExperiment, AdaptiveStepsAtLeastN) {
  ExperimentConfig cfg;
  cfg.method = Method::adaptive1;
  cfg.samples = 100;
  cfg.n_list = {16, 32, 64};
  const auto rows = run_experiment(cfg);
  for (const auto& r : rows) EXPECT_GE(r.mean_steps, r.n);
  EXPECT_LT(rows[0].mean_steps, rows[1].mean_steps);
  EXPECT_LT(rows[1].mean_steps, rows[2].mean_steps);
}

TEST(RunExperiment, InvalidConfig) {
  ExperimentConfig cfg;
  cfg.samples = 0;
  EXPECT_THROW(run_experiment(cfg), SdeError);
  cfg.samples = 1;
  cfg.n_list = {32, 16};
  EXPECT_THROW(run_experiment(cfg), SdeError);
  cfg.n_list = {};
  EXPECT_THROW(run_experiment(cfg), SdeError);
  cfg.n_list = {16};
  cfg.problem = "nope";
  EXPECT_THROW(run_experiment(cfg), SdeError);
}

TEST(ConvergenceSlope, DeterministicProblemIsFirstOrder) {
  const auto p = gbm_problem(0.8, 0.0);
  std::vector<ErrorStats> rows;
  for (int n : {16, 32, 64, 128, 256, 512, 1024}) {
    std::vector<SampleOutcome> out;
    for (std::size_t s = 0; s < 5; ++s) out.push_back(run_sample(p, FixedStep{1.0 / n},
                                                                 StepperKind::explicit_euler, 0, s));
    rows.push_back(summarize("fixed", n, std::move(out)));
  }
  const auto fit = convergence_slope(rows, 200);
  EXPECT_NEAR(fit.slope, -1.0, 0.05);
  EXPECT_LE(fit.interval.lo, fit.interval.hi);
}

TEST(ConvergenceSlope, InsufficientSpan) {
  ExperimentConfig cfg;
  cfg.samples = 5;
  cfg.n_list = {16, 32, 64, 128};  // 0.9 decades
  EXPECT_THROW(convergence_slope(run_experiment(cfg)), SdeError);
  cfg.n_list = {16, 1024};
  EXPECT_THROW(convergence_slope(run_experiment(cfg)), SdeError);
}

TEST(MatchedComparison, InterpolatesInLogLog) {
  ErrorStats a{"fixed", 10, 10.0, 0, 1.0, 0.5, 1, 0, {}};
  ErrorStats b{"fixed", 1000, 1000.0, 0, 0.01, 0.005, 1, 0, {}};
  ErrorStats c{"adaptive1", 5, 100.0, 3, 0.05, 0.2, 1, 0, {}};
  ErrorStats d{"adaptive1", 500, 5000.0, 3, 0.05, 0.2, 1, 0, {}};
  const auto m = matched_comparison({a, b}, {c, d}, Metric::e2);
  ASSERT_EQ(m.size(), 1u);  // 5000 steps lies outside the reference range
  EXPECT_NEAR(m[0].reference, 0.1, 1e-12);
  EXPECT_NEAR(m[0].ratio(), 0.5, 1e-12);
  const auto s = matched_comparison({a, b}, {c}, Metric::sigma_e);
  EXPECT_NEAR(s[0].reference, 0.05, 1e-12);
}

TEST(EmitOutputs, EmptyResultsGiveHeadersOnly) {
  const auto dir = scratch_dir("empty");
  emit_outputs({}, dir);
  EXPECT_EQ(slurp(dir / "stats.csv"), "method,N,mean_steps,sigma_steps,E2,sigma_E,samples,failures\n");
  EXPECT_EQ(slurp(dir / "scatter.csv"), "method,N,sample_id,steps,E\n");
  EXPECT_EQ(slurp(dir / "steps.csv"), "method,N,mean_steps,sigma_steps\n");
  EXPECT_TRUE(fs::exists(dir / "e2.svg"));
  fs::remove_all(dir);
}

TEST(EmitOutputs, RoundTripAndRowCounts) {
  ExperimentConfig cfg;
  cfg.method = Method::adaptive1;
  cfg.problem = "gbm-1.5-2.4";
  cfg.samples = 30;
  cfg.n_list = {8, 16};
  const auto rows = run_experiment(cfg);
  const auto dir = scratch_dir("roundtrip");
  emit_outputs(rows, dir, false);
  EXPECT_FALSE(fs::exists(dir / "e2.svg"));

  const auto parsed = parse_stats_csv(dir / "stats.csv");
  ASSERT_EQ(parsed.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(parsed[i].method, rows[i].method);
    EXPECT_EQ(parsed[i].n, rows[i].n);
    EXPECT_EQ(parsed[i].mean_steps, rows[i].mean_steps);
    EXPECT_EQ(parsed[i].sigma_steps, rows[i].sigma_steps);
    EXPECT_EQ(parsed[i].e2, rows[i].e2);
    EXPECT_EQ(parsed[i].sigma_e, rows[i].sigma_e);
    EXPECT_EQ(parsed[i].samples, rows[i].samples);
    EXPECT_EQ(parsed[i].failures, rows[i].failures);
  }
  EXPECT_EQ(stats_csv(parsed), slurp(dir / "stats.csv"));

  std::size_t expected_rows = 0;
  for (const auto& r : rows) expected_rows += r.samples;
  const std::string scatter = slurp(dir / "scatter.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(scatter.begin(), scatter.end(), '\n')),
            expected_rows + 1);

  // rerunning the same configuration reproduces the bytes
  const auto dir2 = scratch_dir("roundtrip2");
  emit_outputs(run_experiment(cfg), dir2, false);
  EXPECT_EQ(slurp(dir / "stats.csv"), slurp(dir2 / "stats.csv"));
  EXPECT_EQ(slurp(dir / "scatter.csv"), slurp(dir2 / "scatter.csv"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(EmitOutputs, UnwritablePathIsIoError) {
  try {
    emit_outputs({}, "/proc/pathsde-cannot-exist/x");
    FAIL();
  } catch (const SdeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST(Parsing, MethodsAndSteppers) {
  EXPECT_EQ(parse_method("adaptive2"), Method::adaptive2);
  EXPECT_EQ(parse_stepper("implicit"), StepperKind::implicit_euler);
  EXPECT_THROW(parse_method("adaptive3"), SdeError);
  EXPECT_THROW(parse_stepper("rk4"), SdeError);
  EXPECT_EQ(default_alpha(Method::adaptive1), 0.5);
  EXPECT_EQ(default_alpha(Method::adaptive2), 0.9);
}
