#pragma once

// Series kernels for Brownian motion started at 0 and killed on leaving the
// interval (-a, a). Everything is evaluated in the scaled time s = t / a^2 on
// the unit interval; callers rescale.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pathsde/error.hpp"

namespace pathsde::exit_series {

/// Scaled time at which the kernels switch from the reflection (image) series
/// to the eigenfunction series.
inline constexpr double kCrossover = 0.5;
inline constexpr int kMaxTerms = 400;
inline constexpr double kTermTolerance = 1e-14;

namespace detail {

inline constexpr double kPi = std::numbers::pi;

inline double eigen_weight(int k, double s) {
  const double n = 2.0 * k + 1.0;
  return std::exp(-n * n * kPi * kPi * s / 8.0);
}

}  // namespace detail

/// P(sup_{u <= s} |W(u)| < 1) for the eigenfunction series, any s > 0.
inline double survival_eigen(double s) {
  double sum = 0.0;
  for (int k = 0; k < kMaxTerms; ++k) {
    const double term = 4.0 / detail::kPi * detail::eigen_weight(k, s) / (2.0 * k + 1.0);
    sum += (k % 2 == 0) ? term : -term;
    if (term < kTermTolerance * std::max(std::abs(sum), 1e-300) || term == 0.0) break;
  }
  return sum;
}

/// P(sup_{u <= s} |W(u)| >= 1) from the image series, any s > 0.
inline double exit_cdf_images(double s) {
  double sum = 0.0;
  for (int k = 0; k < kMaxTerms; ++k) {
    const double term = 2.0 * std::erfc((2.0 * k + 1.0) / std::sqrt(2.0 * s));
    sum += (k % 2 == 0) ? term : -term;
    if (term < kTermTolerance * std::max(std::abs(sum), 1e-300) || term == 0.0) break;
  }
  return sum;
}

/// Survival probability on the unit interval at scaled time s.
inline double survival_unit(double s) {
  if (s <= 0.0) return 1.0;
  if (s < kCrossover) return 1.0 - exit_cdf_images(s);
  return survival_eigen(s);
}

/// Exit-time distribution function 1 - survival_unit(s), accurate in both tails.
inline double exit_cdf_unit(double s) {
  if (s <= 0.0) return 0.0;
  if (s < kCrossover) return exit_cdf_images(s);
  return 1.0 - survival_eigen(s);
}

/// Exit-time density d/ds exit_cdf_unit(s).
inline double exit_density_unit(double s) {
  if (s <= 0.0) return 0.0;
  double sum = 0.0;
  if (s < kCrossover) {
    const double scale = 2.0 / std::sqrt(2.0 * detail::kPi * s * s * s);
    for (int k = 0; k < kMaxTerms; ++k) {
      const double n = 2.0 * k + 1.0;
      const double term = scale * n * std::exp(-n * n / (2.0 * s));
      sum += (k % 2 == 0) ? term : -term;
      if (term < kTermTolerance * std::max(std::abs(sum), 1e-300) || term == 0.0) break;
    }
  } else {
    for (int k = 0; k < kMaxTerms; ++k) {
      const double n = 2.0 * k + 1.0;
      const double term = detail::kPi / 2.0 * n * detail::eigen_weight(k, s);
      sum += (k % 2 == 0) ? term : -term;
      if (term < kTermTolerance * std::max(std::abs(sum), 1e-300) || term == 0.0) break;
    }
  }
  return sum;
}

/// Sub-probability density of W(s) on {no exit by s}, x in (-1, 1),
/// eigenfunction form: sum_k exp(-(2k+1)^2 pi^2 s / 8) cos((2k+1) pi x / 2).
inline double killed_density_eigen(double s, double x) {
  double sum = 0.0;
  for (int k = 0; k < kMaxTerms; ++k) {
    const double w = detail::eigen_weight(k, s);
    sum += w * std::cos((2.0 * k + 1.0) * detail::kPi * x / 2.0);
    if (w < kTermTolerance * std::max(std::abs(sum), 1e-300) || w == 0.0) break;
  }
  return sum;
}

/// Killed density divided by the free Gaussian density phi_s(x); the image
/// series sum_{k in Z} (-1)^k exp(2k(x - k) / s). Lies in [0, 1] for |x| < 1.
inline double killed_to_gaussian_ratio(double s, double x) {
  double sum = 1.0;
  for (int k = 1; k < kMaxTerms; ++k) {
    const double up = std::exp(2.0 * k * (x - k) / s);
    const double down = std::exp(-2.0 * k * (x + k) / s);
    const double term = up + down;
    sum += (k % 2 == 0) ? term : -term;
    if (term < 1e-17) break;
  }
  return sum;
}

/// Scaled exit time conditioned on exit before s_max: solves
/// exit_cdf_unit(s) = u * exit_cdf_unit(s_max) for s in (0, s_max] by Newton's
/// method on log F, safeguarded by bisection.
inline double invert_exit_time(double u, double s_max) {
  pathsde::detail::require(u > 0.0 && u <= 1.0 && s_max > 0.0, ErrorKind::parameter,
                           "exit-time inversion needs u in (0, 1] and s_max > 0");
  const double f_max = exit_cdf_unit(s_max);
  pathsde::detail::require(f_max > 0.0, ErrorKind::parameter,
                           "exit before s_max has zero probability");
  const double target = std::log(u) + std::log(f_max);
  double lo = 0.0;
  double hi = s_max;
  double s = s_max;
  for (int iter = 0; iter < 300; ++iter) {
    const double f = exit_cdf_unit(s);
    const double g = (f > 0.0) ? std::log(f) - target : -std::numeric_limits<double>::infinity();
    if (g == 0.0) return s;
    if (g < 0.0)
      lo = s;
    else
      hi = s;
    if (std::abs(g) < 1e-14 || hi - lo <= 1e-14 * hi) break;
    double next = 0.5 * (lo + hi);
    if (std::isfinite(g)) {
      const double slope = exit_density_unit(s) / f;
      if (slope > 0.0) {
        const double newton = s - g / slope;
        if (newton > lo && newton < hi) next = newton;
      }
    }
    s = next;
  }
  return s;
}

}  // namespace pathsde::exit_series
