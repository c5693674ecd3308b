#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pathsde/bounded_exit.hpp"
#include "pathsde/brownian.hpp"
#include "pathsde/error.hpp"
#include "pathsde/linalg.hpp"
#include "pathsde/rng.hpp"
#include "pathsde/sde_model.hpp"

namespace pathsde {

enum class StepperKind { explicit_euler, implicit_euler };

inline const char* to_string(StepperKind kind) {
  return kind == StepperKind::explicit_euler ? "explicit" : "implicit";
}

inline constexpr double kDefaultClamp = 100.0;

/// Uniform steps of length h, the last one clipped to the horizon.
struct FixedStep {
  double h;
};

/// Steps end at the first exit of (t, W) from a cuboid sized so that
/// min(|q_ij|, clamp)^{1/2} |dW^i| <= alpha h^{1/2}.
struct AdaptiveI {
  double alpha;
  double h;
  double clamp = kDefaultClamp;
};

/// Steps satisfy min(|q_11|, clamp) |dW^2 - dt| <= alpha^2 h (scalar noise),
/// sampled by the rectangle-chaining approximation with parameter beta.
struct AdaptiveII {
  double alpha;
  double h;
  double beta = 0.1;
  double clamp = kDefaultClamp;
};

using StepController = std::variant<FixedStep, AdaptiveI, AdaptiveII>;

inline double max_step(const StepController& c) {
  return std::visit([](const auto& v) { return v.h; }, c);
}

inline std::string controller_tag(const StepController& c) {
  struct Tag {
    std::string operator()(const FixedStep&) const { return "fixed"; }
    std::string operator()(const AdaptiveI&) const { return "adaptive1"; }
    std::string operator()(const AdaptiveII&) const { return "adaptive2"; }
  };
  return std::visit(Tag{}, c);
}

inline void validate_controller(const StepController& c, double horizon) {
  const double h = max_step(c);
  detail::require(h > 0.0 && h <= horizon * (1.0 + kHorizonTolerance), ErrorKind::parameter,
                  "max step h must lie in (0, T]");
  if (const auto* a = std::get_if<AdaptiveI>(&c)) {
    detail::require(a->alpha > 0.0, ErrorKind::parameter, "alpha must be positive");
    detail::require(a->clamp > 0.0, ErrorKind::parameter, "clamp must be positive");
  }
  if (const auto* a = std::get_if<AdaptiveII>(&c)) {
    detail::require(a->alpha > 0.0, ErrorKind::parameter, "alpha must be positive");
    detail::require(a->clamp > 0.0, ErrorKind::parameter, "clamp must be positive");
    detail::require(a->beta > 0.0 && a->beta < 1.0, ErrorKind::parameter,
                    "beta must lie in (0, 1)");
  }
}

/// y + g_0(y) dt + sum_j g_j(y) dW^j.
inline Vec em_step(const SdeProblem& problem, std::span<const double> y, double dt,
                   std::span<const double> dw, std::size_t step_index = 0) {
  detail::require(dt > 0.0, ErrorKind::parameter, "step needs dt > 0");
  detail::require(dw.size() == problem.noise_dim(), ErrorKind::parameter,
                  "increment has the wrong dimension");
  Vec next(y.begin(), y.end());
  axpy(dt, problem.drift().eval(y), next);
  for (std::size_t j = 0; j < dw.size(); ++j) axpy(dw[j], problem.diffusion(j).eval(y), next);
  if (!all_finite(next))
    throw SdeError(ErrorKind::overflow,
                   "non-finite state after step " + std::to_string(step_index), step_index);
  return next;
}

/// Solves z = y + g_0(z) dt + sum_j g_j(y) dW^j by fixed-point iteration,
/// halving the relaxation factor whenever the residual grows.
inline Vec implicit_em_step(const SdeProblem& problem, std::span<const double> y, double dt,
                            std::span<const double> dw, std::size_t step_index = 0) {
  detail::require(dt > 0.0, ErrorKind::parameter, "step needs dt > 0");
  detail::require(dw.size() == problem.noise_dim(), ErrorKind::parameter,
                  "increment has the wrong dimension");
  Vec base(y.begin(), y.end());
  for (std::size_t j = 0; j < dw.size(); ++j) axpy(dw[j], problem.diffusion(j).eval(y), base);

  const double tol = 1e-12 * (1.0 + norm2(y));
  Vec z = base;
  axpy(dt, problem.drift().eval(y), z);
  auto residual = [&](const Vec& point) {
    Vec r = base;
    axpy(dt, problem.drift().eval(point), r);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= point[i];
    return r;
  };

  double relax = 1.0;
  Vec r = residual(z);
  double rnorm = norm2(r);
  for (int iter = 0; iter < 100; ++iter) {
    if (rnorm <= tol) break;
    Vec trial = z;
    axpy(relax, r, trial);
    Vec rt = residual(trial);
    const double rtnorm = norm2(rt);
    if (!(rtnorm < rnorm) && relax > 1.0 / 1024.0) relax *= 0.5;
    z = std::move(trial);
    r = std::move(rt);
    rnorm = rtnorm;
  }
  if (!(rnorm <= tol)) {
    if (!all_finite(z))
      throw SdeError(ErrorKind::overflow,
                     "non-finite state after step " + std::to_string(step_index), step_index);
    throw SdeError(ErrorKind::solver,
                   "implicit step " + std::to_string(step_index) +
                       " did not converge in 100 iterations (dt too large for the drift)",
                   step_index);
  }
  return z;
}

inline Vec apply_stepper(StepperKind kind, const SdeProblem& problem,
                         std::span<const double> y, double dt, std::span<const double> dw,
                         std::size_t step_index = 0) {
  return kind == StepperKind::explicit_euler ? em_step(problem, y, dt, dw, step_index)
                                             : implicit_em_step(problem, y, dt, dw, step_index);
}

/// Cuboid half-widths a_i = min_j h^{1/2} alpha / min(|q_ij|, clamp)^{1/2},
/// i, j = 1..m; +infinity where every q_ij vanishes.
inline Vec adaptive_half_widths(const QMatrix& q, double alpha, double h, double clamp) {
  const std::size_t m = q.noise_dim();
  Vec a(m, kInfinity);
  for (std::size_t i = 1; i <= m; ++i) {
    double largest = 0.0;
    for (std::size_t j = 1; j <= m; ++j) largest = std::max(largest, std::min(q.norm(i, j), clamp));
    if (largest > 0.0) a[i - 1] = std::sqrt(h) * alpha / std::sqrt(largest);
  }
  return a;
}

struct StepProposal {
  double dt;
  Vec dw;
};

/// Chooses the next step length and Brownian increment from state y at t_now.
inline StepProposal propose_step(const StepController& controller, const SdeProblem& problem,
                                 std::span<const double> y, double t_now, RngStream& stream) {
  const double horizon = problem.horizon();
  const double remaining = horizon - t_now;
  detail::require(remaining > 0.0, ErrorKind::parameter, "already at the horizon");
  const std::size_t m = problem.noise_dim();
  const double h = max_step(controller);
  // A step within tolerance of the horizon lands on it.
  const double a0 = (remaining - h <= kHorizonTolerance * horizon) ? remaining : h;

  if (std::holds_alternative<FixedStep>(controller))
    return {a0, gaussian_increment(stream, a0, m)};

  if (const auto* c = std::get_if<AdaptiveI>(&controller)) {
    if (m == 0) return {a0, Vec{}};
    const QMatrix q = eval_q(problem, y);
    const Cuboid box{a0, adaptive_half_widths(q, c->alpha, c->h, c->clamp)};
    CuboidExitSample s = sample_exit_cuboid(stream, box);
    return {s.tau, std::move(s.dw)};
  }

  const auto& c = std::get<AdaptiveII>(controller);
  if (m != 1)
    throw SdeError(ErrorKind::unsupported_configuration,
                   "Adaptive-II sampling is implemented for scalar noise (m = 1) only");
  const QMatrix q = eval_q(problem, y);
  const RegionII region{std::min(q.norm(1, 1), c.clamp), c.alpha, c.h, a0};
  const RegionIIStep s = sample_region_ii(stream, region, c.beta);
  return {s.tau, Vec{s.dw}};
}

/// Numerical solution on a partition of stopping times together with the
/// Brownian path it was driven by.
class Trajectory {
 public:
  Trajectory(const SdeProblem& problem, std::string controller_tag, StepperKind stepper)
      : record_(problem.noise_dim(), problem.horizon()),
        dim_(problem.dim()),
        states_(problem.y0()),
        controller_tag_(std::move(controller_tag)),
        stepper_(stepper) {}

  const BrownianRecord& record() const noexcept { return record_; }
  const std::vector<double>& times() const noexcept { return record_.times(); }
  std::size_t steps() const noexcept { return record_.steps(); }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> state(std::size_t n) const { return {states_.data() + n * dim_, dim_}; }
  const std::string& controller_tag() const noexcept { return controller_tag_; }
  StepperKind stepper() const noexcept { return stepper_; }

  void append(double dt, std::span<const double> dw, std::span<const double> y) {
    record_.record_step(dt, dw);
    states_.insert(states_.end(), y.begin(), y.end());
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  BrownianRecord record_;
  std::size_t dim_;
  std::vector<double> states_;
  std::string controller_tag_;
  StepperKind stepper_;
};

inline constexpr std::size_t kDefaultStepCap = 100'000'000;

/// Integrates from y0 at t = 0 to the horizon, the final node landing on T
/// exactly. Pure function of its arguments and the stream state.
inline Trajectory integrate(const SdeProblem& problem, const StepController& controller,
                            StepperKind stepper, RngStream& stream,
                            std::size_t step_cap = kDefaultStepCap) {
  validate_controller(controller, problem.horizon());
  Trajectory traj(problem, controller_tag(controller), stepper);
  const double horizon = problem.horizon();
  Vec y = problem.y0();
  std::size_t n = 0;
  while (traj.record().last_time() < horizon) {
    if (n >= step_cap)
      throw SdeError(ErrorKind::runaway,
                     "step cap of " + std::to_string(step_cap) + " exceeded", n);
    const double t = traj.record().last_time();
    StepProposal p = propose_step(controller, problem, y, t, stream);
    y = apply_stepper(stepper, problem, y, p.dt, p.dw, n);
    traj.append(p.dt, p.dw, y);
    ++n;
  }
  return traj;
}

/// h / min_n (tau_{n+1} - tau_n)^{1 - delta} over steps n = 0..N-2 (the last
/// step is clipped by the horizon and excluded). Infinity when N < 2.
inline double step_size_ratio(const Trajectory& traj, double h, double delta) {
  const std::size_t steps = traj.steps();
  if (steps < 2) return kInfinity;
  double smallest = kInfinity;
  for (std::size_t n = 0; n + 1 < steps; ++n)
    smallest = std::min(smallest, traj.record().step_size(n));
  return h / std::pow(smallest, 1.0 - delta);
}

}  // namespace pathsde
