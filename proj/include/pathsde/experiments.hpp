#pragma once

// Monte Carlo harness: error statistics against mean step count for the
// fixed and adaptive controllers, convergence-slope fits, and CSV/SVG output.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pathsde/error.hpp"
#include "pathsde/rng.hpp"
#include "pathsde/sde_model.hpp"
#include "pathsde/stats.hpp"
#include "pathsde/steppers.hpp"

namespace pathsde {

enum class Method { fixed, adaptive1, adaptive2 };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::fixed: return "fixed";
    case Method::adaptive1: return "adaptive1";
    case Method::adaptive2: return "adaptive2";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "fixed") return Method::fixed;
  if (s == "adaptive1") return Method::adaptive1;
  if (s == "adaptive2") return Method::adaptive2;
  throw SdeError(ErrorKind::configuration, "unknown method '" + s + "'");
}

inline StepperKind parse_stepper(const std::string& s) {
  if (s == "explicit") return StepperKind::explicit_euler;
  if (s == "implicit") return StepperKind::implicit_euler;
  throw SdeError(ErrorKind::configuration, "unknown stepper '" + s + "'");
}

/// alpha = 0.5 for Adaptive-I and 0.9 for Adaptive-II unless set.
inline double default_alpha(Method m) { return m == Method::adaptive2 ? 0.9 : 0.5; }

inline std::vector<int> default_n_list() { return {16, 32, 64, 128, 256, 512, 1024}; }

struct ExperimentConfig {
  std::string problem = "gbm-0.1-1.2";
  Method method = Method::fixed;
  StepperKind stepper = StepperKind::explicit_euler;
  std::optional<double> alpha;
  double beta = 0.1;
  double clamp = kDefaultClamp;
  std::vector<int> n_list = default_n_list();
  int samples = 5000;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0: hardware concurrency

  double effective_alpha() const { return alpha.value_or(default_alpha(method)); }

  void validate() const {
    detail::require(samples >= 1, ErrorKind::configuration, "samples must be >= 1");
    detail::require(!n_list.empty(), ErrorKind::configuration, "N list must be nonempty");
    for (std::size_t i = 0; i < n_list.size(); ++i) {
      detail::require(n_list[i] >= 1, ErrorKind::configuration, "N values must be >= 1");
      if (i > 0)
        detail::require(n_list[i] > n_list[i - 1], ErrorKind::configuration,
                        "N list must be increasing");
    }
  }
};

inline StepController make_controller(Method method, double h, double alpha, double beta,
                                      double clamp) {
  switch (method) {
    case Method::fixed: return FixedStep{h};
    case Method::adaptive1: return AdaptiveI{alpha, h, clamp};
    case Method::adaptive2: return AdaptiveII{alpha, h, beta, clamp};
  }
  throw SdeError(ErrorKind::configuration, "unknown method");
}

/// E = max_n |y_n - y(tau_n)| / max_n |y(tau_n)|, with the exact solution
/// evaluated on the trajectory's own Brownian path.
inline double relative_error(const Trajectory& traj, const SdeProblem& problem) {
  detail::require(problem.has_exact(), ErrorKind::configuration,
                  "relative error needs an exact solution");
  const auto& times = traj.times();
  double worst = 0.0;
  double normalizer = 0.0;
  for (std::size_t n = 0; n < times.size(); ++n) {
    const Vec exact = problem.exact(times[n], traj.record().cumulative(n));
    worst = std::max(worst, distance(traj.state(n), exact));
    normalizer = std::max(normalizer, norm2(exact));
  }
  detail::require(normalizer > 0.0, ErrorKind::degenerate_normalizer,
                  "exact solution vanishes on the whole partition");
  return worst / normalizer;
}

struct SampleOutcome {
  std::size_t sample_id = 0;
  bool failed = false;
  std::size_t steps = 0;
  double error = 0.0;
};

/// Statistics for one (method, N) cell over the successful samples.
struct ErrorStats {
  std::string method;
  int n = 0;
  double mean_steps = 0.0;
  double sigma_steps = 0.0;
  double e2 = 0.0;       // (sum_j E_j^2)^{1/2}
  double sigma_e = 0.0;  // sample standard deviation of E
  std::size_t samples = 0;
  std::size_t failures = 0;
  std::vector<SampleOutcome> outcomes;  // every sample, by sample_id

  std::vector<double> errors() const {
    std::vector<double> e;
    for (const auto& o : outcomes)
      if (!o.failed) e.push_back(o.error);
    return e;
  }
};

inline double root_sum_squares(std::span<const double> e) {
  double s = 0.0;
  for (double v : e) s += v * v;
  return std::sqrt(s);
}

inline ErrorStats summarize(std::string method, int n, std::vector<SampleOutcome> outcomes) {
  ErrorStats st;
  st.method = std::move(method);
  st.n = n;
  std::vector<double> errors, steps;
  for (const auto& o : outcomes) {
    if (o.failed) {
      ++st.failures;
      continue;
    }
    errors.push_back(o.error);
    steps.push_back(static_cast<double>(o.steps));
  }
  st.samples = errors.size();
  st.mean_steps = stats::mean(steps);
  st.sigma_steps = stats::stddev(steps);
  st.e2 = root_sum_squares(errors);
  st.sigma_e = stats::stddev(errors);
  st.outcomes = std::move(outcomes);
  return st;
}

/// Calls body(i) for i in [0, count) on `threads` workers; each index is
/// handled exactly once.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
}

/// One sample: integrate on stream (seed, sample_id) and measure E.
inline SampleOutcome run_sample(const SdeProblem& problem, const StepController& controller,
                                StepperKind stepper, std::uint64_t seed, std::size_t sample_id) {
  SampleOutcome out;
  out.sample_id = sample_id;
  try {
    RngStream stream(seed, sample_id);
    const Trajectory traj = integrate(problem, controller, stepper, stream);
    out.steps = traj.steps();
    out.error = relative_error(traj, problem);
    if (!std::isfinite(out.error)) out.failed = true;
  } catch (const SdeError&) {
    out.failed = true;
  }
  return out;
}

/// Runs `samples` trajectories for each N (h = T/N). Output depends only on
/// the config, not on the thread count. More than 1% failed samples in any
/// cell is an experiment error.
inline std::vector<ErrorStats> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const SdeProblem problem = make_problem(config.problem);
  std::vector<ErrorStats> rows;
  for (int n : config.n_list) {
    const double h = problem.horizon() / n;
    const StepController controller =
        make_controller(config.method, h, config.effective_alpha(), config.beta, config.clamp);
    validate_controller(controller, problem.horizon());
    std::vector<SampleOutcome> outcomes(static_cast<std::size_t>(config.samples));
    parallel_for(outcomes.size(), config.threads, [&](std::size_t i) {
      outcomes[i] = run_sample(problem, controller, config.stepper, config.seed, i);
    });
    rows.push_back(summarize(to_string(config.method), n, std::move(outcomes)));
    const auto& row = rows.back();
    if (static_cast<double>(row.failures) > 0.01 * config.samples)
      throw SdeError(ErrorKind::experiment,
                     std::to_string(row.failures) + " of " + std::to_string(config.samples) +
                         " samples failed at N = " + std::to_string(n));
  }
  return rows;
}

struct SlopeFit {
  double slope;
  double intercept;
  stats::Interval interval;
};

/// Least-squares slope of log E2 against log mean_steps with a percentile
/// bootstrap interval (samples resampled within each row).
inline SlopeFit convergence_slope(const std::vector<ErrorStats>& rows, int resamples = 1000,
                                  std::uint64_t seed = 0) {
  detail::require(rows.size() >= 4, ErrorKind::configuration,
                  "convergence slope needs at least four N values");
  double lo = rows.front().mean_steps, hi = lo;
  for (const auto& r : rows) {
    lo = std::min(lo, r.mean_steps);
    hi = std::max(hi, r.mean_steps);
  }
  detail::require(lo > 0.0 && std::log10(hi / lo) >= 1.5, ErrorKind::configuration,
                  "mean step counts must span at least 1.5 decades");

  std::vector<std::vector<double>> errors;
  std::vector<double> lx;
  for (const auto& r : rows) {
    errors.push_back(r.errors());
    lx.push_back(std::log(r.mean_steps));
  }
  auto fit_from = [&](const std::vector<double>& e2) {
    std::vector<double> ly;
    for (double v : e2) ly.push_back(std::log(v));
    return stats::fit_line(lx, ly);
  };
  std::vector<double> e2;
  for (const auto& r : rows) e2.push_back(r.e2);
  const auto point = fit_from(e2);

  RngStream stream(seed, 0x51093);
  const auto interval = stats::bootstrap_interval(
      [&](RngStream& s) {
        std::vector<double> boot;
        for (const auto& e : errors) {
          double sum = 0.0;
          for (std::size_t i = 0; i < e.size(); ++i) {
            const double v = e[stats::uniform_index(s, e.size())];
            sum += v * v;
          }
          boot.push_back(std::sqrt(sum));
        }
        return fit_from(boot).slope;
      },
      resamples, 0.95, stream);
  return {point.slope, point.intercept, interval};
}

enum class Metric { e2, sigma_e };

struct MatchedPoint {
  double mean_steps;
  double candidate;  // metric of the candidate row at this abscissa
  double reference;  // reference metric interpolated in log-log space
  double ratio() const { return candidate / reference; }
};

/// Compares a candidate method against a reference at equal mean step counts:
/// for every candidate row inside the reference's step range, the reference
/// metric is interpolated linearly in (log mean_steps, log metric).
inline std::vector<MatchedPoint> matched_comparison(const std::vector<ErrorStats>& reference,
                                                    const std::vector<ErrorStats>& candidate,
                                                    Metric metric) {
  auto value = [metric](const ErrorStats& r) { return metric == Metric::e2 ? r.e2 : r.sigma_e; };
  std::vector<std::pair<double, double>> ref;
  for (const auto& r : reference) ref.emplace_back(std::log(r.mean_steps), std::log(value(r)));
  std::sort(ref.begin(), ref.end());
  std::vector<MatchedPoint> out;
  if (ref.size() < 2) return out;
  for (const auto& c : candidate) {
    const double x = std::log(c.mean_steps);
    if (x < ref.front().first || x > ref.back().first) continue;
    auto hi = std::lower_bound(ref.begin(), ref.end(), std::make_pair(x, -kInfinity));
    if (hi == ref.begin()) ++hi;
    const auto lo = hi - 1;
    const double w = (hi->first == lo->first) ? 0.0 : (x - lo->first) / (hi->first - lo->first);
    const double interp = lo->second + w * (hi->second - lo->second);
    out.push_back({c.mean_steps, value(c), std::exp(interp)});
  }
  return out;
}

// ---------------------------------------------------------------- output ---

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kStatsHeader =
    "method,N,mean_steps,sigma_steps,E2,sigma_E,samples,failures";
inline constexpr const char* kScatterHeader = "method,N,sample_id,steps,E";
inline constexpr const char* kStepsHeader = "method,N,mean_steps,sigma_steps";

inline std::string stats_csv(const std::vector<ErrorStats>& rows) {
  std::ostringstream os;
  os << kStatsHeader << '\n';
  for (const auto& r : rows)
    os << r.method << ',' << r.n << ',' << format_double(r.mean_steps) << ','
       << format_double(r.sigma_steps) << ',' << format_double(r.e2) << ','
       << format_double(r.sigma_e) << ',' << r.samples << ',' << r.failures << '\n';
  return os.str();
}

inline std::string scatter_csv(const std::vector<ErrorStats>& rows) {
  std::ostringstream os;
  os << kScatterHeader << '\n';
  for (const auto& r : rows)
    for (const auto& o : r.outcomes)
      if (!o.failed)
        os << r.method << ',' << r.n << ',' << o.sample_id << ',' << o.steps << ','
           << format_double(o.error) << '\n';
  return os.str();
}

inline std::string steps_csv(const std::vector<ErrorStats>& rows) {
  std::ostringstream os;
  os << kStepsHeader << '\n';
  for (const auto& r : rows)
    os << r.method << ',' << r.n << ',' << format_double(r.mean_steps) << ','
       << format_double(r.sigma_steps) << '\n';
  return os.str();
}

/// Log-log line chart of one metric against mean steps, one series per method.
inline std::string svg_chart(const std::vector<ErrorStats>& rows, Metric metric,
                             const std::string& title) {
  constexpr double W = 640, H = 420, L = 70, R = 150, Tm = 40, B = 50;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double xmin = kInfinity, xmax = -kInfinity, ymin = kInfinity, ymax = -kInfinity;
  for (const auto& r : rows) {
    const double v = metric == Metric::e2 ? r.e2 : r.sigma_e;
    if (!(r.mean_steps > 0.0) || !(v > 0.0)) continue;
    const double x = std::log10(r.mean_steps), y = std::log10(v);
    series[r.method].emplace_back(x, y);
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"" << L << "\" y=\"24\" font-size=\"14\">" << title << "</text>\n";
  os << "<rect x=\"" << L << "\" y=\"" << Tm << "\" width=\"" << W - L - R << "\" height=\""
     << H - Tm - B << "\" fill=\"none\" stroke=\"black\"/>\n";
  if (!series.empty()) {
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - Tm - B); };
    os << "<text x=\"" << L << "\" y=\"" << H - 15 << "\">log10 mean steps ["
       << format_double(xmin) << ", " << format_double(xmax) << "]</text>\n";
    os << "<text x=\"5\" y=\"" << Tm - 5 << "\">log10 value [" << format_double(ymin) << ", "
       << format_double(ymax) << "]</text>\n";
    const char* colors[] = {"black", "blue", "red", "green"};
    const char* dashes[] = {"2,3", "8,4", "", "4,2"};
    int idx = 0;
    for (const auto& [name, pts] : series) {
      const int c = (name == "fixed") ? 0 : (name == "adaptive1") ? 1 : (name == "adaptive2") ? 2 : 3;
      os << "<polyline fill=\"none\" stroke=\"" << colors[c] << "\" stroke-dasharray=\""
         << dashes[c] << "\" points=\"";
      for (const auto& [x, y] : pts) os << px(x) << ',' << py(y) << ' ';
      os << "\"/>\n";
      os << "<text x=\"" << W - R + 10 << "\" y=\"" << Tm + 20 + 18 * idx << "\" fill=\""
         << colors[c] << "\">" << name << "</text>\n";
      ++idx;
    }
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SdeError(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw SdeError(ErrorKind::io, "failed writing '" + path.string() + "'");
}

/// Writes stats.csv, scatter.csv, steps.csv and, optionally, e2.svg and
/// sigma.svg into `dir` (created if missing).
inline void emit_outputs(const std::vector<ErrorStats>& rows, const std::filesystem::path& dir,
                         bool charts = true) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw SdeError(ErrorKind::io, "cannot create '" + dir.string() + "': " + ec.message());
  write_file(dir / "stats.csv", stats_csv(rows));
  write_file(dir / "scatter.csv", scatter_csv(rows));
  write_file(dir / "steps.csv", steps_csv(rows));
  if (charts) {
    write_file(dir / "e2.svg", svg_chart(rows, Metric::e2, "|E|_2 against mean steps"));
    write_file(dir / "sigma.svg", svg_chart(rows, Metric::sigma_e, "sigma(E) against mean steps"));
  }
}

/// Parses a stats.csv back into rows (per-sample outcomes are not stored there).
inline std::vector<ErrorStats> parse_stats_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SdeError(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != kStatsHeader)
    throw SdeError(ErrorKind::io, "'" + path.string() + "' has an unexpected header");
  std::vector<ErrorStats> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw SdeError(ErrorKind::io, "malformed row in '" + path.string() + "'");
    ErrorStats r;
    r.method = f[0];
    r.n = std::stoi(f[1]);
    r.mean_steps = std::stod(f[2]);
    r.sigma_steps = std::stod(f[3]);
    r.e2 = std::stod(f[4]);
    r.sigma_e = std::stod(f[5]);
    r.samples = std::stoul(f[6]);
    r.failures = std::stoul(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace pathsde
