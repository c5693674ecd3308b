#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "pathsde/error.hpp"
#include "pathsde/rng.hpp"

namespace pathsde::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double stddev(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mu = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// Linearly interpolated quantile of unsorted data, p in [0, 1].
inline double quantile(std::vector<double> x, double p) {
  detail::require(!x.empty(), ErrorKind::configuration, "quantile of empty data");
  std::sort(x.begin(), x.end());
  const double pos = p * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

struct LineFit {
  double slope;
  double intercept;
};

/// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size() && x.size() >= 2, ErrorKind::configuration,
                  "line fit needs at least two points");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  detail::require(sxx > 0.0, ErrorKind::configuration, "line fit needs distinct abscissae");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

struct PlaneFit {
  double intercept;
  double coef1;
  double coef2;
};

/// Ordinary least squares y = intercept + coef1 * x1 + coef2 * x2.
inline PlaneFit fit_plane(std::span<const double> x1, std::span<const double> x2,
                          std::span<const double> y) {
  const std::size_t n = y.size();
  detail::require(x1.size() == n && x2.size() == n && n >= 3, ErrorKind::configuration,
                  "plane fit needs at least three points");
  const double m1 = mean(x1), m2 = mean(x2), my = mean(y);
  double s11 = 0, s12 = 0, s22 = 0, s1y = 0, s2y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x1[i] - m1, b = x2[i] - m2, c = y[i] - my;
    s11 += a * a;
    s12 += a * b;
    s22 += b * b;
    s1y += a * c;
    s2y += b * c;
  }
  const double det = s11 * s22 - s12 * s12;
  detail::require(det > 1e-12 * s11 * s22, ErrorKind::configuration,
                  "plane fit predictors are collinear");
  const double c1 = (s22 * s1y - s12 * s2y) / det;
  const double c2 = (s11 * s2y - s12 * s1y) / det;
  return {my - c1 * m1 - c2 * m2, c1, c2};
}

struct Interval {
  double lo;
  double hi;
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool overlaps(double a, double b) const { return lo <= b && a <= hi; }
};

/// Percentile bootstrap interval of `statistic`, evaluated on `resamples`
/// draws produced by `statistic(stream)`; the callback performs its own
/// resampling with the stream it is handed.
inline Interval bootstrap_interval(const std::function<double(RngStream&)>& statistic,
                                   int resamples, double level, RngStream& stream) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    const double v = statistic(stream);
    if (std::isfinite(v)) values.push_back(v);
  }
  detail::require(!values.empty(), ErrorKind::configuration, "bootstrap produced no values");
  const double tail = (1.0 - level) / 2.0;
  return {quantile(values, tail), quantile(values, 1.0 - tail)};
}

/// Index in [0, n) drawn uniformly.
inline std::size_t uniform_index(RngStream& stream, std::size_t n) {
  return std::min(static_cast<std::size_t>(stream.uniform() * static_cast<double>(n)), n - 1);
}

/// Asymptotic Kolmogorov tail probability P(K > lambda).
inline double kolmogorov_tail(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1) ? term : -term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic;
  double p_value;
};

/// Two-sample Kolmogorov-Smirnov test.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  detail::require(!a.empty() && !b.empty(), ErrorKind::configuration, "KS test of empty data");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d)};
}

/// Upper tail of the chi-square distribution.
inline double chi_square_tail(double x, double dof) {
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

}  // namespace pathsde::stats
