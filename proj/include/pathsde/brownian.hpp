#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pathsde/error.hpp"
#include "pathsde/linalg.hpp"
#include "pathsde/rng.hpp"

namespace pathsde {

/// Absolute tolerance, relative to the horizon, for "reached T".
inline constexpr double kHorizonTolerance = 1e-12;

/// m independent Normal(0, dt) draws.
inline Vec gaussian_increment(RngStream& stream, double dt, std::size_t m) {
  detail::require(dt > 0.0 && std::isfinite(dt), ErrorKind::parameter,
                  "Brownian increment needs dt > 0");
  const double sd = std::sqrt(dt);
  Vec dw(m);
  for (double& x : dw) x = sd * stream.normal();
  return dw;
}

/// Brownian path sampled at the partition times 0 = tau_0 < ... < tau_N = T.
/// Increments and cumulative values are stored flat, m per node.
class BrownianRecord {
 public:
  BrownianRecord(std::size_t m, double horizon) : m_(m), horizon_(horizon) {
    detail::require(horizon > 0.0, ErrorKind::parameter, "horizon must be positive");
    times_.push_back(0.0);
    cumulative_.assign(m, 0.0);
  }

  std::size_t noise_dim() const noexcept { return m_; }
  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return times_.size() - 1; }
  const std::vector<double>& times() const noexcept { return times_; }
  double last_time() const noexcept { return times_.back(); }
  bool complete() const noexcept { return times_.back() == horizon_; }

  std::span<const double> increment(std::size_t n) const {
    return {increments_.data() + n * m_, m_};
  }
  /// W(tau_n); cumulative(0) is the zero vector.
  std::span<const double> cumulative(std::size_t n) const {
    return {cumulative_.data() + n * m_, m_};
  }
  /// The step length as sampled; differs from times()[n + 1] - times()[n] by
  /// the rounding of the cumulative sum.
  double step_size(std::size_t n) const { return step_sizes_[n]; }

  /// Appends a step of length dt with increment dW. A step ending within
  /// kHorizonTolerance * T of the horizon is snapped to T exactly; dt itself
  /// is kept as given.
  void record_step(double dt, std::span<const double> dw) {
    detail::require(dw.size() == m_, ErrorKind::parameter, "increment has the wrong dimension");
    const double tol = kHorizonTolerance * horizon_;
    double next = times_.back() + dt;
    if (!(dt > 0.0) || !(next > times_.back()))
      detail::fail(ErrorKind::ordering, "partition times must be strictly increasing");
    if (next > horizon_ + tol)
      detail::fail(ErrorKind::ordering, "step overshoots the horizon");
    if (horizon_ - next <= tol) next = horizon_;
    if (!(next > times_.back()))
      detail::fail(ErrorKind::ordering, "partition times must be strictly increasing");
    times_.push_back(next);
    step_sizes_.push_back(dt);
    const std::size_t base = cumulative_.size() - m_;
    for (std::size_t j = 0; j < m_; ++j) {
      increments_.push_back(dw[j]);
      cumulative_.push_back(cumulative_[base + j] + dw[j]);
    }
  }

  void reserve(std::size_t steps) {
    times_.reserve(steps + 1);
    step_sizes_.reserve(steps);
    increments_.reserve(steps * m_);
    cumulative_.reserve((steps + 1) * m_);
  }

  friend bool operator==(const BrownianRecord&, const BrownianRecord&) = default;

 private:
  std::size_t m_;
  double horizon_;
  std::vector<double> times_;
  std::vector<double> step_sizes_;
  std::vector<double> increments_;
  std::vector<double> cumulative_;
};

}  // namespace pathsde
