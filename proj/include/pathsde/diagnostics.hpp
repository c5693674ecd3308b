#pragma once

// Empirical probes of the pathwise error assumptions: local truncation errors,
// their telescoped sums X_kn, and continuity of the flow in the initial data.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "pathsde/brownian.hpp"
#include "pathsde/error.hpp"
#include "pathsde/linalg.hpp"
#include "pathsde/rng.hpp"
#include "pathsde/sde_model.hpp"
#include "pathsde/stats.hpp"
#include "pathsde/steppers.hpp"

namespace pathsde {

/// How the exact flow over one step is obtained.
struct TruncationReference {
  enum class Kind { exact, fine_grid };
  Kind kind = Kind::exact;
  int refine_factor = 64;

  static TruncationReference exact() { return {}; }
  static TruncationReference fine_grid(int refine) { return {Kind::fine_grid, refine}; }
};

/// Brownian sub-increments over a step of length dt, conditioned to sum to dw:
/// a Gaussian bridge sampled left to right. Returned flat, `pieces` rows of m.
inline Vec bridge_increments(RngStream& stream, double dt, std::span<const double> dw,
                             int pieces) {
  const std::size_t m = dw.size();
  Vec out(static_cast<std::size_t>(pieces) * m);
  const double sub = dt / pieces;
  for (std::size_t j = 0; j < m; ++j) {
    double left = dw[j];
    for (int i = 0; i < pieces; ++i) {
      const double rest = dt - sub * i;
      double inc = left;
      if (i + 1 < pieces) {
        const double var = sub * (rest - sub) / rest;
        inc = left * sub / rest + std::sqrt(std::max(var, 0.0)) * stream.normal();
      }
      out[static_cast<std::size_t>(i) * m + j] = inc;
      left -= inc;
    }
  }
  return out;
}

/// Explicit Euler from z through `pieces` equal sub-steps with the given
/// sub-increments.
inline Vec euler_on_increments(const SdeProblem& problem, std::span<const double> z, double dt,
                               std::span<const double> increments, int pieces) {
  const std::size_t m = problem.noise_dim();
  const double sub = dt / pieces;
  Vec y(z.begin(), z.end());
  for (int i = 0; i < pieces; ++i)
    y = em_step(problem, y, sub, increments.subspan(static_cast<std::size_t>(i) * m, m));
  return y;
}

/// One entry ||X_kn|| of the truncation-error sum matrix.
struct PartialSumEntry {
  std::size_t k;
  std::size_t n;
  double tau_k;
  double tau_n;
  double norm_x;
};

struct TruncationReport {
  std::size_t dim = 0;
  double h = 0.0;
  std::vector<double> times;
  std::vector<double> per_step_errors;  // ||delta_k||
  Vec deltas;                           // delta_k, flat, dim per step
  std::vector<PartialSumEntry> partial_sums;
  /// Slope of log ||delta_k|| against log(step size); NaN for uniform steps.
  double step_exponent = std::numeric_limits<double>::quiet_NaN();
  /// Slope of log ||X_kn|| against log(tau_n - tau_k) over partial_sums.
  double time_exponent = std::numeric_limits<double>::quiet_NaN();

  std::size_t steps() const { return per_step_errors.size(); }
  std::span<const double> delta(std::size_t k) const { return {deltas.data() + k * dim, dim}; }

  /// X_kn = sum_{j=k}^{n-1} delta_j.
  Vec truncation_sum(std::size_t k, std::size_t n) const {
    detail::require(k <= n && n <= steps(), ErrorKind::parameter, "need k <= n <= N");
    Vec x(dim, 0.0);
    for (std::size_t j = k; j < n; ++j) axpy(1.0, delta(j), x);
    return x;
  }

  /// Full (N+1) x (N+1) matrix of ||X_kn|| (zero on and below the diagonal).
  std::vector<std::vector<double>> dense_partial_sums() const {
    const std::size_t nodes = steps() + 1;
    std::vector<std::vector<double>> out(nodes, std::vector<double>(nodes, 0.0));
    for (std::size_t k = 0; k < nodes; ++k) {
      Vec x(dim, 0.0);
      for (std::size_t n = k + 1; n < nodes; ++n) {
        axpy(1.0, delta(n - 1), x);
        out[k][n] = norm2(x);
      }
    }
    return out;
  }
};

/// (k, n) pairs with geometrically spaced lags n - k = 1, 2, 4, ... and two
/// start points per lag; at most 32 pairs.
inline std::vector<std::pair<std::size_t, std::size_t>> partial_sum_grid(std::size_t steps) {
  std::vector<std::pair<std::size_t, std::size_t>> grid;
  for (std::size_t lag = 1; lag <= steps && grid.size() + 2 <= 32; lag *= 2) {
    grid.emplace_back(0, lag);
    const std::size_t mid = (steps - lag) / 2;
    if (mid > 0) grid.emplace_back(mid, mid + lag);
  }
  return grid;
}

namespace detail {

inline double slope_or_nan(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 3) return std::numeric_limits<double>::quiet_NaN();
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (*hi - *lo < std::log(1.5)) return std::numeric_limits<double>::quiet_NaN();
  return stats::fit_line(x, y).slope;
}

}  // namespace detail

/// Local truncation errors delta_k = y(tau_{k+1}; tau_k, y_k) - S_{k,k+1}(y_k)
/// along a trajectory, with the exact flow taken on the recorded Brownian
/// increment. The fine-grid reference draws a Brownian bridge under each step
/// from `stream`.
inline TruncationReport local_truncation(const SdeProblem& problem, const Trajectory& traj,
                                         TruncationReference reference, RngStream& stream,
                                         double h = 0.0) {
  if (reference.kind == TruncationReference::Kind::exact)
    detail::require(problem.has_exact(), ErrorKind::configuration,
                    "exact reference requested but the problem has no exact solution");
  else
    detail::require(reference.refine_factor >= 10, ErrorKind::configuration,
                    "fine-grid reference needs refine_factor >= 10");

  const BrownianRecord& rec = traj.record();
  const std::size_t steps = traj.steps();
  TruncationReport rep;
  rep.dim = problem.dim();
  rep.times = rec.times();
  rep.per_step_errors.reserve(steps);
  rep.deltas.reserve(steps * rep.dim);
  double largest_step = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double dt = rec.step_size(k);
    largest_step = std::max(largest_step, dt);
    const auto dw = rec.increment(k);
    const auto yk = traj.state(k);
    Vec flow;
    if (reference.kind == TruncationReference::Kind::exact) {
      flow = problem.exact_flow(yk, dt, dw);
    } else {
      const Vec inc = bridge_increments(stream, dt, dw, reference.refine_factor);
      flow = euler_on_increments(problem, yk, dt, inc, reference.refine_factor);
    }
    const Vec step = apply_stepper(traj.stepper(), problem, yk, dt, dw, k);
    const Vec delta = difference(flow, step);
    rep.per_step_errors.push_back(norm2(delta));
    rep.deltas.insert(rep.deltas.end(), delta.begin(), delta.end());
  }
  rep.h = h > 0.0 ? h : largest_step;

  for (const auto& [k, n] : partial_sum_grid(steps)) {
    rep.partial_sums.push_back(
        {k, n, rep.times[k], rep.times[n], norm2(rep.truncation_sum(k, n))});
  }

  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < steps; ++k) {
    if (rep.per_step_errors[k] > 0.0) {
      lx.push_back(std::log(rec.step_size(k)));
      ly.push_back(std::log(rep.per_step_errors[k]));
    }
  }
  rep.step_exponent = detail::slope_or_nan(lx, ly);
  lx.clear();
  ly.clear();
  for (const auto& e : rep.partial_sums) {
    if (e.norm_x > 0.0) {
      lx.push_back(std::log(e.tau_n - e.tau_k));
      ly.push_back(std::log(e.norm_x));
    }
  }
  rep.time_exponent = detail::slope_or_nan(lx, ly);
  return rep;
}

inline TruncationReport local_truncation(const SdeProblem& problem, const Trajectory& traj,
                                         double h = 0.0) {
  RngStream unused(0, 0);
  return local_truncation(problem, traj, TruncationReference::exact(), unused, h);
}

/// Order of the per-step error in h across reports taken at several h: slope
/// of log median ||delta_k|| (pooled per h) against log h.
inline stats::LineFit step_order_fit(std::span<const TruncationReport> reports) {
  std::map<double, std::vector<double>> by_h;
  for (const auto& r : reports)
    by_h[r.h].insert(by_h[r.h].end(), r.per_step_errors.begin(), r.per_step_errors.end());
  detail::require(by_h.size() >= 2, ErrorKind::configuration,
                  "step order fit needs at least two distinct h");
  std::vector<double> lx, ly;
  for (auto& [h, errs] : by_h) {
    lx.push_back(std::log(h));
    ly.push_back(std::log(stats::median(errs)));
  }
  return stats::fit_line(lx, ly);
}

struct ScalingFit {
  double h_exponent;
  double time_exponent;
  stats::Interval h_interval;
  stats::Interval time_interval;
};

/// Two-way log-log regression of the `level` quantile of ||X_kn|| against
/// (tau_n - tau_k) and h, with percentile bootstrap intervals obtained by
/// resampling trajectories within each h.
inline ScalingFit truncation_sum_scaling(std::span<const TruncationReport> reports,
                                         double level = 0.9, int resamples = 1000,
                                         std::uint64_t seed = 0) {
  std::map<double, std::vector<const TruncationReport*>> by_h;
  for (const auto& r : reports) by_h[r.h].push_back(&r);
  detail::require(by_h.size() >= 3, ErrorKind::configuration,
                  "truncation-sum scaling needs at least three distinct h");
  for (const auto& [h, group] : by_h)
    detail::require(group.size() >= 100, ErrorKind::configuration,
                    "truncation-sum scaling needs at least 100 samples per h");

  // Cells keyed by (h, lag) pool both start points of every trajectory.
  struct Cell {
    double h;
    std::size_t lag;
  };
  std::vector<Cell> cells;
  for (const auto& [h, group] : by_h) {
    std::vector<std::size_t> lags;
    for (const auto& e : group.front()->partial_sums) lags.push_back(e.n - e.k);
    std::sort(lags.begin(), lags.end());
    lags.erase(std::unique(lags.begin(), lags.end()), lags.end());
    for (std::size_t lag : lags) cells.push_back({h, lag});
  }

  auto fit = [&](const std::map<double, std::vector<std::size_t>>& pick) {
    std::vector<double> lx1, lx2, ly;
    for (const Cell& cell : cells) {
      const auto& group = by_h.at(cell.h);
      const auto& idx = pick.at(cell.h);
      std::vector<double> norms;
      double span_sum = 0.0;
      for (std::size_t i : idx) {
        for (const auto& e : group[i]->partial_sums) {
          if (e.n - e.k != cell.lag) continue;
          norms.push_back(e.norm_x);
          span_sum += e.tau_n - e.tau_k;
        }
      }
      if (norms.empty()) continue;
      const double q = stats::quantile(norms, level);
      if (!(q > 0.0)) continue;
      lx1.push_back(std::log(cell.h));
      lx2.push_back(std::log(span_sum / static_cast<double>(norms.size())));
      ly.push_back(std::log(q));
    }
    return stats::fit_plane(lx1, lx2, ly);
  };

  std::map<double, std::vector<std::size_t>> identity;
  for (const auto& [h, group] : by_h) {
    auto& v = identity[h];
    for (std::size_t i = 0; i < group.size(); ++i) v.push_back(i);
  }
  const auto point = fit(identity);

  RngStream stream(seed, 0x5ca1e);
  std::vector<double> h_boot, t_boot;
  for (int b = 0; b < resamples; ++b) {
    std::map<double, std::vector<std::size_t>> pick;
    for (const auto& [h, group] : by_h) {
      auto& v = pick[h];
      for (std::size_t i = 0; i < group.size(); ++i)
        v.push_back(stats::uniform_index(stream, group.size()));
    }
    const auto f = fit(pick);
    h_boot.push_back(f.coef1);
    t_boot.push_back(f.coef2);
  }
  return {point.coef1, point.coef2,
          {stats::quantile(h_boot, 0.025), stats::quantile(h_boot, 0.975)},
          {stats::quantile(t_boot, 0.025), stats::quantile(t_boot, 0.975)}};
}

/// Differences of two flows started at z1 and z2 over [s, t] on one path.
struct FlowSample {
  double span;         // t - s
  double distance;     // ||z1 - z2||
  double lipschitz;    // ||y(t;s,z1) - y(t;s,z2)|| / ||z1 - z2||
  double increment;    // ||(y(t;s,z1) - z1) - (y(t;s,z2) - z2)|| / ||z1 - z2||
  double scaled;       // increment / (t - s)^{1/2}
  Vec flow_difference;       // y(t;s,z1) - y(t;s,z2)
  Vec increment_difference;  // (y(t;s,z1) - z1) - (y(t;s,z2) - z2)
};

/// Evaluates both flows on the same Brownian increment dw over a span. With a
/// fine-grid reference the same bridge drives both solves. Ratios are 0 when
/// z1 = z2.
inline FlowSample flow_pair(const SdeProblem& problem, std::span<const double> z1,
                            std::span<const double> z2, double span,
                            std::span<const double> dw, TruncationReference reference,
                            RngStream& stream) {
  Vec y1, y2;
  if (reference.kind == TruncationReference::Kind::exact) {
    y1 = problem.exact_flow(z1, span, dw);
    y2 = problem.exact_flow(z2, span, dw);
  } else {
    const Vec inc = bridge_increments(stream, span, dw, reference.refine_factor);
    y1 = euler_on_increments(problem, z1, span, inc, reference.refine_factor);
    y2 = euler_on_increments(problem, z2, span, inc, reference.refine_factor);
  }
  FlowSample out;
  out.span = span;
  out.distance = distance(z1, z2);
  out.flow_difference = difference(y1, y2);
  out.increment_difference = out.flow_difference;
  for (std::size_t i = 0; i < out.increment_difference.size(); ++i)
    out.increment_difference[i] -= z1[i] - z2[i];
  if (out.distance > 0.0) {
    out.lipschitz = norm2(out.flow_difference) / out.distance;
    out.increment = norm2(out.increment_difference) / out.distance;
  } else {
    out.lipschitz = 0.0;
    out.increment = 0.0;
  }
  out.scaled = out.increment / std::sqrt(span);
  return out;
}

struct FlowProbe {
  std::vector<FlowSample> samples;
  double max_lipschitz = 0.0;
  double max_scaled = 0.0;
  /// Slope of log median increment ratio against log(t - s), over
  /// geometrically spaced span bins.
  double span_exponent = std::numeric_limits<double>::quiet_NaN();
};

/// Random pairs (z1, z2, s, t): s uniform on [0, T), t - s log-uniform down to
/// 1e-4 T, initial states perturbed around y0.
inline FlowProbe flow_probe(const SdeProblem& problem, int pairs, RngStream& stream,
                            TruncationReference reference = TruncationReference::exact()) {
  if (reference.kind == TruncationReference::Kind::exact)
    detail::require(problem.has_exact(), ErrorKind::configuration,
                    "flow probe needs an exact solution or a fine-grid reference");
  detail::require(pairs > 0, ErrorKind::parameter, "flow probe needs pairs > 0");
  const double horizon = problem.horizon();
  const double shortest = 1e-4 * horizon;
  const double scale = std::max(1.0, norm2(problem.y0()));
  FlowProbe probe;
  probe.samples.reserve(static_cast<std::size_t>(pairs));
  for (int p = 0; p < pairs; ++p) {
    const double s = (1.0 - shortest / horizon) * horizon * stream.uniform();
    const double longest = horizon - s;
    const double span =
        std::exp(std::log(shortest) + stream.uniform() * (std::log(longest) - std::log(shortest)));
    Vec z1 = problem.y0(), z2 = problem.y0();
    for (double& v : z1) v += scale * stream.normal();
    for (double& v : z2) v += scale * stream.normal();
    const Vec dw = gaussian_increment(stream, span, problem.noise_dim());
    probe.samples.push_back(flow_pair(problem, z1, z2, span, dw, reference, stream));
    probe.max_lipschitz = std::max(probe.max_lipschitz, probe.samples.back().lipschitz);
    probe.max_scaled = std::max(probe.max_scaled, probe.samples.back().scaled);
  }

  constexpr int kBins = 8;
  std::vector<std::vector<double>> ratios(kBins), spans(kBins);
  const double lo = std::log(shortest), width = (std::log(horizon) - lo) / kBins;
  for (const auto& f : probe.samples) {
    const int b = std::clamp(static_cast<int>((std::log(f.span) - lo) / width), 0, kBins - 1);
    ratios[b].push_back(f.increment);
    spans[b].push_back(std::log(f.span));
  }
  std::vector<double> lx, ly;
  for (int b = 0; b < kBins; ++b) {
    if (ratios[b].size() < 5) continue;
    const double med = stats::median(ratios[b]);
    if (!(med > 0.0)) continue;
    lx.push_back(stats::mean(spans[b]));
    ly.push_back(std::log(med));
  }
  if (lx.size() >= 3) probe.span_exponent = stats::fit_line(lx, ly).slope;
  return probe;
}

}  // namespace pathsde
