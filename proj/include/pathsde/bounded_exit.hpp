#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "pathsde/error.hpp"
#include "pathsde/exit_series.hpp"
#include "pathsde/linalg.hpp"
#include "pathsde/rng.hpp"

namespace pathsde {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Space-time box [0, a0] x [-a_1, a_1] x ... x [-a_m, a_m]. Half-widths may
/// be +infinity.
struct Cuboid {
  double a0;
  Vec a;

  void validate() const {
    detail::require(a0 > 0.0 && std::isfinite(a0), ErrorKind::parameter,
                    "cuboid time bound must be positive and finite");
    for (double ai : a)
      detail::require(ai > 0.0, ErrorKind::parameter, "cuboid half-widths must be positive");
  }
};

enum class FaceKind { time, space };

struct ExitFace {
  FaceKind kind = FaceKind::time;
  std::size_t coordinate = 0;  // meaningful for space faces
  int sign = 0;                // +1 or -1 for space faces

  friend bool operator==(const ExitFace&, const ExitFace&) = default;
};

struct CuboidExitSample {
  double tau;
  Vec dw;
  ExitFace face;
};

/// P(sup_{s <= t} |W(s)| < a).
inline double survival_single(double a, double t) {
  detail::require(a > 0.0, ErrorKind::parameter, "half-width must be positive");
  detail::require(t >= 0.0, ErrorKind::parameter, "time must be nonnegative");
  if (std::isinf(a)) return 1.0;
  return exit_series::survival_unit(t / (a * a));
}

/// Probability of leaving (-a, a) by time t; 1 - survival_single computed
/// without cancellation.
inline double exit_probability_single(double a, double t) {
  detail::require(a > 0.0, ErrorKind::parameter, "half-width must be positive");
  detail::require(t >= 0.0, ErrorKind::parameter, "time must be nonnegative");
  if (std::isinf(a)) return 0.0;
  return exit_series::exit_cdf_unit(t / (a * a));
}

namespace detail {

// Below this, hitting a space face is treated as impossible.
inline constexpr double kNegligibleExit = 1e-200;

/// W(s) on the unit interval conditioned on no exit by scaled time s.
inline double sample_killed_position_unit(RngStream& stream, double s) {
  if (s < exit_series::kCrossover) {
    // Gaussian envelope: the killed density never exceeds phi_s.
    const double sd = std::sqrt(s);
    for (;;) {
      const double x = sd * stream.normal();
      if (!(std::abs(x) < 1.0)) continue;
      if (stream.uniform() < exit_series::killed_to_gaussian_ratio(s, x)) return x;
    }
  }
  // Uniform envelope: the killed density peaks at the origin.
  const double peak = exit_series::killed_density_eigen(s, 0.0);
  for (;;) {
    const double x = 2.0 * stream.uniform_open() - 1.0;
    if (!(std::abs(x) < 1.0)) continue;
    if (stream.uniform() * peak < exit_series::killed_density_eigen(s, x)) return x;
  }
}

/// Scales a unit-interval position to (-a, a) keeping it strictly inside.
inline double scale_inside(double x, double a) {
  double v = x * a;
  if (v >= a) v = std::nextafter(a, 0.0);
  if (v <= -a) v = std::nextafter(-a, 0.0);
  return v;
}

/// Position at time t of a coordinate with half-width a, given no exit.
inline double sample_surviving_position(RngStream& stream, double t, double a) {
  if (std::isinf(a)) return std::sqrt(t) * stream.normal();
  return scale_inside(sample_killed_position_unit(stream, t / (a * a)), a);
}

struct SingleExit {
  bool hits_space;
  double tau;  // exit time when hits_space
  int sign;
};

inline SingleExit sample_single_coordinate(RngStream& stream, double a0, double a) {
  if (std::isinf(a)) return {false, a0, 0};
  const double s_max = a0 / (a * a);
  const double p_exit = exit_series::exit_cdf_unit(s_max);
  if (p_exit < kNegligibleExit || stream.uniform() >= p_exit) return {false, a0, 0};
  const double s = exit_series::invert_exit_time(stream.uniform_open(), s_max);
  const double tau = std::min(s * a * a, a0);
  const int sign = stream.uniform() < 0.5 ? -1 : 1;
  return {true, tau, sign};
}

}  // namespace detail

/// Inverse-CDF map used for space-face exit times: the exit time in (0, a0]
/// whose conditional distribution value given exit before a0 equals u.
inline double conditional_exit_time(double u, double a0, double a1) {
  detail::require(a0 > 0.0 && a1 > 0.0 && std::isfinite(a1), ErrorKind::parameter,
                  "conditional exit time needs a0 > 0 and finite a1 > 0");
  return std::min(exit_series::invert_exit_time(u, a0 / (a1 * a1)) * a1 * a1, a0);
}

/// Exact first exit of (t, W) from [0, a0] x [-a1, a1].
inline CuboidExitSample sample_exit_single(RngStream& stream, double a0, double a1) {
  detail::require(a0 > 0.0 && std::isfinite(a0), ErrorKind::parameter,
                  "time bound must be positive and finite");
  detail::require(a1 > 0.0, ErrorKind::parameter, "half-width must be positive");
  const auto exit = detail::sample_single_coordinate(stream, a0, a1);
  if (exit.hits_space)
    return {exit.tau, Vec{exit.sign * a1}, ExitFace{FaceKind::space, 0, exit.sign}};
  return {a0, Vec{detail::sample_surviving_position(stream, a0, a1)}, ExitFace{}};
}

/// Exact first exit of (t, W^1, ..., W^m) from a cuboid. Coordinates are
/// independent, so each is sampled against [0, a0] separately; the earliest
/// exit wins and the remaining coordinates are drawn from their surviving
/// laws at that time.
inline CuboidExitSample sample_exit_cuboid(RngStream& stream, const Cuboid& c) {
  c.validate();
  if (c.a.size() == 1) return sample_exit_single(stream, c.a0, c.a[0]);

  const std::size_t m = c.a.size();
  CuboidExitSample out{c.a0, Vec(m, 0.0), ExitFace{}};
  for (std::size_t i = 0; i < m; ++i) {
    const auto exit = detail::sample_single_coordinate(stream, c.a0, c.a[i]);
    if (exit.hits_space && exit.tau < out.tau) {
      out.tau = exit.tau;
      out.face = ExitFace{FaceKind::space, i, exit.sign};
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (out.face.kind == FaceKind::space && out.face.coordinate == i)
      out.dw[i] = out.face.sign * c.a[i];
    else
      out.dw[i] = detail::sample_surviving_position(stream, out.tau, c.a[i]);
  }
  return out;
}

/// The Adaptive-II admissible set for scalar noise:
///   0 <= dt <= min(h, remaining),  qnorm |dW^2 - dt| <= alpha^2 h.
struct RegionII {
  double qnorm;
  double alpha;
  double h;
  double remaining;

  void validate() const {
    detail::require(qnorm >= 0.0 && std::isfinite(qnorm), ErrorKind::parameter,
                    "region norm must be finite and nonnegative");
    detail::require(alpha > 0.0 && h > 0.0, ErrorKind::parameter,
                    "region needs alpha > 0 and h > 0");
  }

  double time_limit() const { return std::min(h, remaining); }

  /// Half-width c of the band |x^2 - t| <= c; infinite when qnorm = 0.
  double band() const { return qnorm > 0.0 ? alpha * alpha * h / qnorm : kInfinity; }

  /// Membership, allowing `ulps` units of rounding in the evaluation of both
  /// sides of the inequality.
  bool contains(double dt, double dw, double ulps = 0.0) const {
    const double eps = std::numeric_limits<double>::epsilon();
    const double limit = time_limit();
    if (dt < 0.0 || dt > limit + ulps * eps * limit) return false;
    const double lhs = qnorm * std::abs(dw * dw - dt);
    const double rhs = alpha * alpha * h;
    return lhs <= rhs + ulps * eps * (qnorm * (dw * dw + dt) + rhs);
  }
};

/// One sub-rectangle [t, t + a0] x [x - a1, x + a1] visited by sample_region_ii.
struct SubRectangle {
  double t;
  double x;
  double a0;
  double a1;
};

struct RegionIIStep {
  double tau;
  double dw;
};

/// Largest half-width a1 with {t} x [x - a1, x + a1] inside the region, and the
/// largest a0 with [t, t + a0] x [x - a1, x + a1] inside it. Both are pulled in
/// by a few ulps of the quantities they are computed from so that rounding
/// never places a corner outside.
inline SubRectangle region_ii_rectangle(const RegionII& r, double t, double x) {
  constexpr double slack = 4.0 * std::numeric_limits<double>::epsilon();
  const double c = r.band();
  const double ax = std::abs(x);
  const double outer = std::sqrt(t + c);
  double a1 = outer - ax;
  if (t > c) a1 = std::min(a1, ax - std::sqrt(t - c));
  a1 -= slack * (ax + outer);
  if (!(a1 > 0.0)) return {t, x, 0.0, 0.0};

  const double nearest = std::max(0.0, ax - a1);
  const double band_a0 = nearest * nearest + c - t - slack * (t + c + nearest * nearest);
  double a0 = std::min(r.time_limit() - t, band_a0);
  if (!(a0 > 0.0)) a0 = 0.0;
  return {t, x, a0, a1};
}

/// Approximate sampler for an Adaptive-II step (m = 1). Starting from the
/// origin, repeatedly takes the largest admissible rectangle around the
/// current point, samples its exact exit, and moves there; stops once a
/// sub-step is shorter than beta * h. The result always lies in the region.
inline RegionIIStep sample_region_ii(RngStream& stream, const RegionII& r, double beta,
                                     std::vector<SubRectangle>* trace = nullptr) {
  r.validate();
  detail::require(beta > 0.0, ErrorKind::parameter, "beta must be positive");
  detail::require(r.remaining > std::numeric_limits<double>::epsilon() * r.h,
                  ErrorKind::zero_step, "no time left before the horizon");
  const double limit = r.time_limit();
  if (r.qnorm == 0.0) return {limit, std::sqrt(limit) * stream.normal()};

  double t = 0.0;
  double x = 0.0;
  for (int k = 0; k < 10'000'000; ++k) {
    const SubRectangle rect = region_ii_rectangle(r, t, x);
    if (rect.a0 <= 0.0 || rect.a1 <= 0.0) return {t, x};
    if (trace) trace->push_back(rect);
    const CuboidExitSample sub = sample_exit_single(stream, rect.a0, rect.a1);
    t = std::min(t + sub.tau, limit);
    x += sub.dw[0];
    if (sub.tau < beta * r.h) return {t, x};
  }
  throw SdeError(ErrorKind::runaway, "region sampler did not terminate");
}

}  // namespace pathsde
