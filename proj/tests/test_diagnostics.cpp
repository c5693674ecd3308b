#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pathsde/diagnostics.hpp"
#include "pathsde/stats.hpp"

using namespace pathsde;

namespace {

std::vector<TruncationReport> reports_for(const SdeProblem& p, const std::vector<int>& n_list,
                                          int samples, std::uint64_t seed) {
  std::vector<TruncationReport> out;
  for (int n : n_list) {
    const double h = p.horizon() / n;
    for (int s = 0; s < samples; ++s) {
      RngStream rng(seed, static_cast<std::uint64_t>(s));
      const auto traj = integrate(p, FixedStep{h}, StepperKind::explicit_euler, rng);
      out.push_back(local_truncation(p, traj, h));
    }
  }
  return out;
}

}  // namespace

TEST(LocalTruncation, OdeEulerIsSecondOrderPerStep) {
  const auto p = linear_ode_problem(-0.7, 2.0);
  const auto reports = reports_for(p, {8, 16, 32, 64, 128}, 1, 0);
  EXPECT_NEAR(step_order_fit(reports).slope, 2.0, 0.1);
}

TEST(LocalTruncation, GbmPerStepErrorIsFirstOrderInH) {
  const auto p = make_problem("gbm-0.1-1.2");
  const auto reports = reports_for(p, {16, 32, 64, 128, 256}, 50, 1);
  EXPECT_NEAR(step_order_fit(reports).slope, 1.0, 0.15);
}

TEST(LocalTruncation, SingleStepMatrix) {
  const auto p = make_problem("gbm-0.1-1.2");
  RngStream rng(2, 0);
  const auto traj = integrate(p, FixedStep{1.0}, StepperKind::explicit_euler, rng);
  const auto rep = local_truncation(p, traj);
  ASSERT_EQ(rep.steps(), 1u);
  const auto m = rep.dense_partial_sums();
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0][0], 0.0);
  EXPECT_EQ(m[1][0], 0.0);
  EXPECT_EQ(m[1][1], 0.0);
  EXPECT_EQ(m[0][1], rep.per_step_errors[0]);
  EXPECT_GT(m[0][1], 0.0);
  // the exact GBM flow against one Euler step, computed by hand
  const double dw = traj.record().increment(0)[0];
  const double expected = std::abs(gbm_exact(0.1, 1.2, 1.0, 1.0, dw) - (1.0 + 0.1 + 1.2 * dw));
  EXPECT_NEAR(m[0][1], expected, 1e-14 * std::max(1.0, expected));
}

TEST(LocalTruncation, PartialSumsAreAdditive) {
  const auto p = make_problem("gbm-1.5-2.4");
  RngStream rng(3, 0);
  const auto traj = integrate(p, AdaptiveI{0.5, 1.0 / 16}, StepperKind::explicit_euler, rng);
  const auto rep = local_truncation(p, traj, 1.0 / 16);
  const std::size_t n = rep.steps();
  ASSERT_GE(n, 4u);
  for (std::size_t k = 0; k < n; k += 3)
    for (std::size_t j = k; j <= n; j += 2)
      for (std::size_t m = j; m <= n; m += 5) {
        const Vec whole = rep.truncation_sum(k, m);
        Vec parts = rep.truncation_sum(k, j);
        axpy(1.0, rep.truncation_sum(j, m), parts);
        EXPECT_NEAR(whole[0], parts[0], 1e-12 * std::max(1.0, std::abs(whole[0])));
      }
  for (const auto& e : rep.partial_sums) {
    EXPECT_GE(e.norm_x, 0.0);
    EXPECT_EQ(e.norm_x, norm2(rep.truncation_sum(e.k, e.n)));
  }
  EXPECT_LE(rep.partial_sums.size(), 32u);
}

TEST(LocalTruncation, FineGridReferenceTracksExactFlow) {
  const auto p = make_problem("gbm-0.1-1.2");
  std::vector<double> ratio;
  for (int s = 0; s < 20; ++s) {
    RngStream rng(4, static_cast<std::uint64_t>(s)), bridge(40, static_cast<std::uint64_t>(s));
    const auto traj = integrate(p, FixedStep{1.0 / 32}, StepperKind::explicit_euler, rng);
    const auto exact = local_truncation(p, traj);
    const auto fine = local_truncation(p, traj, TruncationReference::fine_grid(1000), bridge);
    for (std::size_t k = 0; k < exact.steps(); ++k)
      ratio.push_back(fine.per_step_errors[k] / exact.per_step_errors[k]);
  }
  EXPECT_NEAR(stats::median(ratio), 1.0, 0.1);
}

TEST(LocalTruncation, MissingReferenceIsConfigurationError) {
  const SdeProblem p("no-exact", {linear_scalar_field(1, 0.1), linear_scalar_field(1, 0.3)},
                     1.0, Vec{1.0});
  RngStream rng(5, 0);
  const auto traj = integrate(p, FixedStep{0.25}, StepperKind::explicit_euler, rng);
  try {
    local_truncation(p, traj);
    FAIL();
  } catch (const SdeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::configuration);
  }
  EXPECT_THROW(local_truncation(p, traj, TruncationReference::fine_grid(5), rng), SdeError);
  EXPECT_NO_THROW(local_truncation(p, traj, TruncationReference::fine_grid(10), rng));
}

TEST(TruncationSumScaling, DeterministicProblemScalesLinearlyInH) {
  const auto p = linear_ode_problem(-0.7, 2.0);
  const auto reports = reports_for(p, {16, 32, 64, 128}, 100, 0);
  const auto fit = truncation_sum_scaling(reports, 0.9, 100);
  EXPECT_NEAR(fit.h_exponent, 1.0, 0.1);
}

TEST(TruncationSumScaling, InsufficientData) {
  const auto p = linear_ode_problem(-0.7, 2.0);
  EXPECT_THROW(truncation_sum_scaling(reports_for(p, {16, 32}, 100, 0)), SdeError);
  EXPECT_THROW(truncation_sum_scaling(reports_for(p, {16, 32, 64}, 20, 0)), SdeError);
}

TEST(FlowProbe, IdenticalStartsGiveZero) {
  const auto p = make_problem("gbm-0.1-1.2");
  RngStream rng(6, 0);
  const Vec z{1.7}, dw{0.4};
  for (auto ref : {TruncationReference::exact(), TruncationReference::fine_grid(20)}) {
    const auto f = flow_pair(p, z, z, 0.3, dw, ref, rng);
    EXPECT_EQ(norm2(f.flow_difference), 0.0);
    EXPECT_EQ(norm2(f.increment_difference), 0.0);
    EXPECT_EQ(f.lipschitz, 0.0);
    EXPECT_EQ(f.increment, 0.0);
  }
}

TEST(FlowProbe, GbmRatiosHaveClosedForm) {
  // the GBM flow is linear in z: y(t; s, z) = z exp((mu - sigma^2/2)(t - s) + sigma dW)
  const auto p = make_problem("gbm-0.1-1.2");
  RngStream rng(7, 0);
  const double span = 0.2, dw = -0.35;
  const auto f = flow_pair(p, Vec{1.0}, Vec{2.5}, span, Vec{dw}, TruncationReference::exact(), rng);
  const double growth = std::exp((0.1 - 0.72) * span + 1.2 * dw);
  EXPECT_NEAR(f.lipschitz, growth, 1e-14);
  EXPECT_NEAR(f.increment, std::abs(growth - 1.0), 1e-14);
  EXPECT_NEAR(f.scaled, std::abs(growth - 1.0) / std::sqrt(span), 1e-13);
}

TEST(FlowProbe, IncrementRatioScalesLikeSquareRootOfSpan) {
  const auto p = make_problem("gbm-0.1-1.2");
  RngStream rng(8, 0);
  const auto probe = flow_probe(p, 5000, rng);
  EXPECT_GE(probe.span_exponent, 0.3);
  EXPECT_LE(probe.span_exponent, 0.6);
  EXPECT_TRUE(std::isfinite(probe.max_lipschitz));
  for (const auto& s : probe.samples) {
    EXPECT_GE(s.lipschitz, 0.0);
    EXPECT_GE(s.increment, 0.0);
  }
}

TEST(FlowProbe, RequiresAReference) {
  const SdeProblem p("no-exact", {linear_scalar_field(1, 0.1), linear_scalar_field(1, 0.3)},
                     1.0, Vec{1.0});
  RngStream rng(9, 0);
  EXPECT_THROW(flow_probe(p, 10, rng), SdeError);
  EXPECT_NO_THROW(flow_probe(p, 10, rng, TruncationReference::fine_grid(10)));
}
