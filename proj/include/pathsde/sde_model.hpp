#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pathsde/error.hpp"
#include "pathsde/linalg.hpp"

namespace pathsde {

enum class DerivativeMode { analytic, finite_difference };

/// A vector field g: R^d -> R^d together with its first and second
/// derivative actions Dg(y)v and D^2g(y)(v, w).
class VectorField {
 public:
  using Eval = std::function<Vec(std::span<const double>)>;
  using JacobianAction =
      std::function<Vec(std::span<const double> y, std::span<const double> v)>;
  using HessianAction = std::function<Vec(
      std::span<const double> y, std::span<const double> v, std::span<const double> w)>;

  VectorField() = default;

  static VectorField analytic(std::size_t dim, Eval eval, JacobianAction jacobian,
                              HessianAction hessian) {
    detail::require(dim > 0, ErrorKind::parameter, "vector field dimension must be positive");
    VectorField f;
    f.dim_ = dim;
    f.eval_ = std::move(eval);
    f.jacobian_ = std::move(jacobian);
    f.hessian_ = std::move(hessian);
    f.mode_ = DerivativeMode::analytic;
    return f;
  }

  std::size_t dim() const noexcept { return dim_; }
  DerivativeMode derivative_mode() const noexcept { return mode_; }

  Vec eval(std::span<const double> y) const { return eval_(y); }
  Vec jacobian_action(std::span<const double> y, std::span<const double> v) const {
    return jacobian_(y, v);
  }
  Vec hessian_action(std::span<const double> y, std::span<const double> v,
                     std::span<const double> w) const {
    return hessian_(y, v, w);
  }

  const Eval& evaluator() const noexcept { return eval_; }

 private:
  friend VectorField finite_difference_derivatives(std::size_t dim, Eval g, double step);

  std::size_t dim_ = 0;
  Eval eval_;
  JacobianAction jacobian_;
  HessianAction hessian_;
  DerivativeMode mode_ = DerivativeMode::analytic;
};

/// Wraps an eval-only field with central-difference derivative actions.
///
/// The Jacobian action uses the increment step * max(1, |y|); the mixed
/// second difference uses ten times that, which balances rounding against
/// truncation for the 1/h^2 stencil.
inline VectorField finite_difference_derivatives(std::size_t dim, VectorField::Eval g,
                                                 double step) {
  detail::require(step > 0.0 && std::isfinite(step), ErrorKind::parameter,
                  "finite-difference step must be positive");
  detail::require(dim > 0, ErrorKind::parameter, "vector field dimension must be positive");
  VectorField f;
  f.dim_ = dim;
  f.eval_ = g;
  f.mode_ = DerivativeMode::finite_difference;
  f.jacobian_ = [g, step](std::span<const double> y, std::span<const double> v) {
    const double h = step * std::max(1.0, norm2(y));
    Vec plus(y.begin(), y.end()), minus(y.begin(), y.end());
    axpy(h, v, plus);
    axpy(-h, v, minus);
    Vec out = g(plus);
    const Vec lo = g(minus);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - lo[i]) / (2.0 * h);
    return out;
  };
  f.hessian_ = [g, step](std::span<const double> y, std::span<const double> v,
                         std::span<const double> w) {
    const double h = 10.0 * step * std::max(1.0, norm2(y));
    auto shifted = [&](double sv, double sw) {
      Vec z(y.begin(), y.end());
      axpy(sv * h, v, z);
      axpy(sw * h, w, z);
      return g(z);
    };
    Vec out = shifted(1, 1);
    const Vec pm = shifted(1, -1), mp = shifted(-1, 1), mm = shifted(-1, -1);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (out[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h);
    return out;
  };
  return f;
}

/// Autonomous Ito SDE dy = g_0(y) dt + sum_j g_j(y) dW^j on [0, T].
class SdeProblem {
 public:
  /// Exact solution from y0 as a function of (t, W(t)).
  using ExactSolution = std::function<Vec(double t, std::span<const double> w)>;
  /// Exact flow from an arbitrary state z over a step of length dt with
  /// Brownian increment dW. Optional; enables exact-reference diagnostics.
  using ExactFlow =
      std::function<Vec(std::span<const double> z, double dt, std::span<const double> dw)>;

  SdeProblem(std::string name, std::vector<VectorField> fields, double horizon, Vec y0,
             ExactFlow flow = {})
      : name_(std::move(name)),
        fields_(std::move(fields)),
        horizon_(horizon),
        y0_(std::move(y0)),
        flow_(std::move(flow)) {
    detail::require(!fields_.empty(), ErrorKind::parameter, "problem needs a drift field");
    detail::require(horizon_ > 0.0 && std::isfinite(horizon_), ErrorKind::parameter,
                    "horizon must be positive");
    detail::require(!y0_.empty() && all_finite(y0_), ErrorKind::parameter,
                    "initial state must be nonempty and finite");
    for (const auto& g : fields_)
      detail::require(g.dim() == y0_.size(), ErrorKind::parameter,
                      "vector field dimension does not match the state dimension");
    if (flow_) {
      const Vec zero(noise_dim(), 0.0);
      const Vec start = flow_(y0_, 0.0, zero);
      detail::require(start.size() == y0_.size() && distance(start, y0_) <=
                                                        1e-12 * std::max(1.0, norm2(y0_)),
                      ErrorKind::parameter, "exact solution must start at y0");
    }
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return y0_.size(); }
  std::size_t noise_dim() const noexcept { return fields_.size() - 1; }
  double horizon() const noexcept { return horizon_; }
  const Vec& y0() const noexcept { return y0_; }

  const VectorField& drift() const { return fields_[0]; }
  const VectorField& diffusion(std::size_t j) const { return fields_.at(j + 1); }
  /// Field j in {0..m}; 0 is the drift.
  const VectorField& field(std::size_t j) const { return fields_.at(j); }
  const std::vector<VectorField>& fields() const noexcept { return fields_; }

  bool has_exact() const noexcept { return static_cast<bool>(flow_); }

  Vec exact(double t, std::span<const double> w) const {
    detail::require(has_exact(), ErrorKind::configuration,
                    "problem '" + name_ + "' has no exact solution");
    return flow_(y0_, t, w);
  }

  Vec exact_flow(std::span<const double> z, double dt, std::span<const double> dw) const {
    detail::require(has_exact(), ErrorKind::configuration,
                    "problem '" + name_ + "' has no exact solution");
    return flow_(z, dt, dw);
  }

 private:
  std::string name_;
  std::vector<VectorField> fields_;
  double horizon_;
  Vec y0_;
  ExactFlow flow_;
};

/// Second-order coefficient fields q_ij(y), i, j in {0..m}, each in R^d.
class QMatrix {
 public:
  QMatrix(std::size_t m, std::size_t d) : m_(m), d_(d), data_((m + 1) * (m + 1) * d, 0.0) {}

  std::size_t noise_dim() const noexcept { return m_; }
  std::size_t dim() const noexcept { return d_; }

  std::span<double> operator()(std::size_t i, std::size_t j) {
    return {data_.data() + (i * (m_ + 1) + j) * d_, d_};
  }
  std::span<const double> operator()(std::size_t i, std::size_t j) const {
    return {data_.data() + (i * (m_ + 1) + j) * d_, d_};
  }
  double norm(std::size_t i, std::size_t j) const { return norm2((*this)(i, j)); }

 private:
  std::size_t m_;
  std::size_t d_;
  Vec data_;
};

/// q_0j = Dg_j g_0 + 1/2 sum_k D^2 g_j (g_k, g_k);  q_ij = Dg_j g_i for i != 0.
inline QMatrix eval_q(const SdeProblem& problem, std::span<const double> y) {
  detail::require(y.size() == problem.dim(), ErrorKind::parameter,
                  "state has the wrong dimension");
  detail::require(all_finite(y), ErrorKind::non_finite_input, "eval_q at a non-finite state");
  const std::size_t m = problem.noise_dim();
  std::vector<Vec> g;
  g.reserve(m + 1);
  for (const auto& f : problem.fields()) g.push_back(f.eval(y));

  QMatrix q(m, problem.dim());
  for (std::size_t j = 0; j <= m; ++j) {
    const VectorField& gj = problem.field(j);
    for (std::size_t i = 0; i <= m; ++i) {
      Vec entry = gj.jacobian_action(y, g[i]);
      if (i == 0) {
        for (std::size_t k = 1; k <= m; ++k) axpy(0.5, gj.hessian_action(y, g[k], g[k]), entry);
      }
      std::copy(entry.begin(), entry.end(), q(i, j).begin());
    }
  }
  return q;
}

/// Geometric Brownian motion y0 exp((mu - sigma^2/2) t + sigma w).
inline double gbm_exact(double mu, double sigma, double y0, double t, double w) {
  return y0 * std::exp((mu - 0.5 * sigma * sigma) * t + sigma * w);
}

/// Field y -> c * y in any dimension.
inline VectorField linear_scalar_field(std::size_t dim, double c) {
  return VectorField::analytic(
      dim,
      [c](std::span<const double> y) {
        Vec out(y.begin(), y.end());
        for (double& v : out) v *= c;
        return out;
      },
      [c](std::span<const double>, std::span<const double> v) {
        Vec out(v.begin(), v.end());
        for (double& x : out) x *= c;
        return out;
      },
      [dim](std::span<const double>, std::span<const double>, std::span<const double>) {
        return Vec(dim, 0.0);
      });
}

/// Constant field y -> value.
inline VectorField constant_field(Vec value) {
  const std::size_t dim = value.size();
  return VectorField::analytic(
      dim, [value](std::span<const double>) { return value; },
      [dim](std::span<const double>, std::span<const double>) { return Vec(dim, 0.0); },
      [dim](std::span<const double>, std::span<const double>, std::span<const double>) {
        return Vec(dim, 0.0);
      });
}

/// Scalar GBM dy = mu y dt + sigma y dW with its closed-form flow.
inline SdeProblem gbm_problem(double mu, double sigma, double y0 = 1.0, double horizon = 1.0,
                              std::string name = {}) {
  if (name.empty()) name = "gbm";
  std::vector<VectorField> fields{linear_scalar_field(1, mu), linear_scalar_field(1, sigma)};
  auto flow = [mu, sigma](std::span<const double> z, double dt, std::span<const double> dw) {
    return Vec{gbm_exact(mu, sigma, z[0], dt, dw[0])};
  };
  return SdeProblem(std::move(name), std::move(fields), horizon, Vec{y0}, flow);
}

/// Deterministic scalar ODE dy = lambda y dt (no driving noise, m = 0).
inline SdeProblem linear_ode_problem(double lambda, double y0 = 1.0, double horizon = 1.0) {
  std::vector<VectorField> fields{linear_scalar_field(1, lambda)};
  auto flow = [lambda](std::span<const double> z, double dt, std::span<const double>) {
    return Vec{z[0] * std::exp(lambda * dt)};
  };
  return SdeProblem("linear-ode", std::move(fields), horizon, Vec{y0}, flow);
}

inline const std::vector<std::string>& problem_keys() {
  static const std::vector<std::string> keys{"gbm-0.1-1.2", "gbm-1.5-2.4"};
  return keys;
}

/// Built-in test problems on [0, 1] with y(0) = 1.
inline SdeProblem make_problem(const std::string& key) {
  if (key == "gbm-0.1-1.2") return gbm_problem(0.1, 1.2, 1.0, 1.0, key);
  if (key == "gbm-1.5-2.4") return gbm_problem(1.5, 2.4, 1.0, 1.0, key);
  throw SdeError(ErrorKind::configuration, "unknown problem key '" + key + "'");
}

}  // namespace pathsde
