#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "pathsde/rng.hpp"
#include "pathsde/sde_model.hpp"

using namespace pathsde;

namespace {

// d = 2, m = 2 problem with smooth nonlinear fields and hand-written
// derivative actions.
std::vector<VectorField::Eval> nonlinear_evals() {
  return {
      [](std::span<const double> y) { return Vec{std::sin(y[0]) + y[1], y[0] * y[1]}; },
      [](std::span<const double> y) { return Vec{0.5 * y[1] * y[1], std::cos(y[0])}; },
      [](std::span<const double> y) {
        return Vec{std::exp(-0.1 * y[0]), 0.3 * y[0] * y[1]};
      },
  };
}

SdeProblem nonlinear_analytic() {
  const auto e = nonlinear_evals();
  std::vector<VectorField> f;
  f.push_back(VectorField::analytic(
      2, e[0],
      [](std::span<const double> y, std::span<const double> v) {
        return Vec{std::cos(y[0]) * v[0] + v[1], y[1] * v[0] + y[0] * v[1]};
      },
      [](std::span<const double> y, std::span<const double> v, std::span<const double> w) {
        return Vec{-std::sin(y[0]) * v[0] * w[0], v[0] * w[1] + v[1] * w[0]};
      }));
  f.push_back(VectorField::analytic(
      2, e[1],
      [](std::span<const double> y, std::span<const double> v) {
        return Vec{y[1] * v[1], -std::sin(y[0]) * v[0]};
      },
      [](std::span<const double> y, std::span<const double> v, std::span<const double> w) {
        return Vec{v[1] * w[1], -std::cos(y[0]) * v[0] * w[0]};
      }));
  f.push_back(VectorField::analytic(
      2, e[2],
      [](std::span<const double> y, std::span<const double> v) {
        return Vec{-0.1 * std::exp(-0.1 * y[0]) * v[0], 0.3 * (y[1] * v[0] + y[0] * v[1])};
      },
      [](std::span<const double> y, std::span<const double> v, std::span<const double> w) {
        return Vec{0.01 * std::exp(-0.1 * y[0]) * v[0] * w[0],
                   0.3 * (v[0] * w[1] + v[1] * w[0])};
      }));
  return SdeProblem("nonlinear", std::move(f), 1.0, Vec{0.5, -0.5});
}

SdeProblem nonlinear_fd() {
  std::vector<VectorField> f;
  for (auto& e : nonlinear_evals()) f.push_back(finite_difference_derivatives(2, e, 1e-5));
  return SdeProblem("nonlinear-fd", std::move(f), 1.0, Vec{0.5, -0.5});
}

}  // namespace

TEST(EvalQ, GbmCoefficientsAtUnitState) {
  const auto p = make_problem("gbm-0.1-1.2");
  const QMatrix q = eval_q(p, Vec{1.0});
  // g0 = mu y, g1 = sigma y: q11 = sigma^2 y, q01 = q10 = mu sigma y, q00 = mu^2 y.
  EXPECT_NEAR(q(1, 1)[0], 1.44, 1e-14);
  EXPECT_NEAR(q(0, 1)[0], 0.12, 1e-14);
  EXPECT_NEAR(q(1, 0)[0], 0.12, 1e-14);
  EXPECT_NEAR(q(0, 0)[0], 0.01, 1e-14);
}

TEST(EvalQ, SecondGbmProblem) {
  const auto p = make_problem("gbm-1.5-2.4");
  const QMatrix q = eval_q(p, Vec{2.0});
  EXPECT_NEAR(q(1, 1)[0], 11.52, 1e-12);
  EXPECT_NEAR(q.norm(1, 1), 11.52, 1e-12);
}

TEST(EvalQ, ConstantDiffusionZeroDriftVanishes) {
  std::vector<VectorField> f{constant_field({0.0, 0.0}), constant_field({1.0, -2.0}),
                             constant_field({0.5, 3.0})};
  const SdeProblem p("additive", std::move(f), 1.0, Vec{1.0, 1.0});
  const QMatrix q = eval_q(p, Vec{0.3, -4.0});
  for (std::size_t i = 0; i <= 2; ++i)
    for (std::size_t j = 0; j <= 2; ++j) EXPECT_EQ(q.norm(i, j), 0.0);
}

TEST(EvalQ, RejectsNonFiniteState) {
  const auto p = make_problem("gbm-0.1-1.2");
  try {
    eval_q(p, Vec{std::nan("")});
    FAIL() << "expected an error";
  } catch (const SdeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_finite_input);
  }
}

TEST(EvalQ, DeterministicBitForBit) {
  const auto p = nonlinear_analytic();
  const Vec y{0.7, -1.3};
  const QMatrix a = eval_q(p, y), b = eval_q(p, y);
  for (std::size_t i = 0; i <= 2; ++i)
    for (std::size_t j = 0; j <= 2; ++j)
      EXPECT_EQ(std::memcmp(a(i, j).data(), b(i, j).data(), 2 * sizeof(double)), 0);
}

TEST(EvalQ, AnalyticAgreesWithFiniteDifferencesAtRandomStates) {
  const auto pa = nonlinear_analytic();
  const auto pf = nonlinear_fd();
  RngStream rng(11, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec y{4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0};
    const QMatrix qa = eval_q(pa, y), qf = eval_q(pf, y);
    for (std::size_t i = 0; i <= 2; ++i)
      for (std::size_t j = 0; j <= 2; ++j) {
        const double err = distance(qa(i, j), qf(i, j));
        EXPECT_LE(err, 1e-5 * std::max(qa.norm(i, j), 1e-2)) << "q" << i << j;
      }
  }
}

TEST(FiniteDifference, LinearFieldJacobianIsExact) {
  auto g = [](std::span<const double> y) {
    return Vec{2.0 * y[0] - y[1], 0.5 * y[0] + 3.0 * y[1]};
  };
  const auto f = finite_difference_derivatives(2, g, 1e-5);
  EXPECT_EQ(f.derivative_mode(), DerivativeMode::finite_difference);
  const Vec y{1.5, -0.25}, v{0.3, 0.7};
  const Vec jv = f.jacobian_action(y, v);
  EXPECT_NEAR(jv[0], 2.0 * 0.3 - 0.7, 1e-8);
  EXPECT_NEAR(jv[1], 0.5 * 0.3 + 3.0 * 0.7, 1e-8);
}

TEST(FiniteDifference, QuadraticHessian) {
  const auto f =
      finite_difference_derivatives(1, [](std::span<const double> y) { return Vec{y[0] * y[0]}; },
                                    1e-5);
  EXPECT_NEAR(f.hessian_action(Vec{0.8}, Vec{1.0}, Vec{1.0})[0], 2.0, 1e-4);
  EXPECT_NEAR(f.jacobian_action(Vec{0.8}, Vec{1.0})[0], 1.6, 1e-8);
}

TEST(FiniteDifference, ConstantFieldHasZeroDerivatives) {
  const auto f =
      finite_difference_derivatives(2, [](std::span<const double>) { return Vec{4.0, -1.0}; },
                                    1e-5);
  const Vec y{3.0, 2.0}, v{1.0, -1.0};
  EXPECT_EQ(norm2(f.jacobian_action(y, v)), 0.0);
  EXPECT_EQ(norm2(f.hessian_action(y, v, v)), 0.0);
}

TEST(FiniteDifference, RejectsNonPositiveStep) {
  auto g = [](std::span<const double> y) { return Vec(y.begin(), y.end()); };
  EXPECT_THROW(finite_difference_derivatives(1, g, 0.0), SdeError);
  EXPECT_THROW(finite_difference_derivatives(1, g, -1e-5), SdeError);
}

TEST(GbmExact, ClosedFormValues) {
  EXPECT_EQ(gbm_exact(0.1, 1.2, 1.0, 0.0, 0.0), 1.0);
  // (mu - sigma^2/2) t + sigma w = -0.62 + 0.6
  EXPECT_NEAR(gbm_exact(0.1, 1.2, 1.0, 1.0, 0.5), std::exp(-0.02), 1e-15);
  EXPECT_NEAR(gbm_exact(0.7, 0.0, 3.0, 2.0, 123.0), 3.0 * std::exp(1.4), 1e-12);
}

TEST(GbmExact, FlowProperty) {
  RngStream rng(5, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const double t = rng.uniform(), s = rng.uniform();
    const double w1 = rng.normal(), w2 = rng.normal();
    const double direct = gbm_exact(0.1, 1.2, 1.0, t + s, w1 + w2);
    const double composed = gbm_exact(0.1, 1.2, gbm_exact(0.1, 1.2, 1.0, t, w1), s, w2);
    EXPECT_NEAR(composed / direct, 1.0, 1e-12);
  }
}

TEST(Registry, BuiltInProblems) {
  for (const auto& key : problem_keys()) {
    const auto p = make_problem(key);
    EXPECT_EQ(p.name(), key);
    EXPECT_EQ(p.dim(), 1u);
    EXPECT_EQ(p.noise_dim(), 1u);
    EXPECT_EQ(p.horizon(), 1.0);
    EXPECT_EQ(p.exact(0.0, Vec{0.0})[0], 1.0);
  }
  EXPECT_THROW(make_problem("gbm-9-9"), SdeError);
}

TEST(Problem, RejectsInconsistentConstruction) {
  EXPECT_THROW(SdeProblem("bad", {linear_scalar_field(2, 1.0)}, 1.0, Vec{1.0}), SdeError);
  EXPECT_THROW(SdeProblem("bad", {linear_scalar_field(1, 1.0)}, 0.0, Vec{1.0}), SdeError);
  auto wrong_start = [](std::span<const double> z, double, std::span<const double>) {
    return Vec{z[0] + 1.0};
  };
  EXPECT_THROW(SdeProblem("bad", {linear_scalar_field(1, 1.0)}, 1.0, Vec{1.0}, wrong_start),
               SdeError);
}
