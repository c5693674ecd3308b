// pathsde: Monte Carlo error study and diagnostics for adaptive Euler-Maruyama.
//
//   pathsde run --problem gbm-0.1-1.2 --method fixed,adaptive1 --N 16,32,64 --out out/
//   pathsde diagnose --problem gbm-0.1-1.2 --N 16,32,64,128 --samples 200 --out diag/

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pathsde/pathsde.hpp"

using namespace pathsde;
namespace fs = std::filesystem;

namespace {

struct RunOptions {
  std::string problem = "gbm-0.1-1.2";
  std::vector<std::string> methods{"fixed"};
  std::string stepper = "explicit";
  std::optional<double> alpha;
  double beta = 0.1;
  double clamp = kDefaultClamp;
  std::vector<int> n_list = default_n_list();
  int samples = 5000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out;
  bool no_svg = false;
};

struct DiagnoseOptions {
  std::string problem = "gbm-0.1-1.2";
  std::string method = "fixed";
  std::string stepper = "explicit";
  std::optional<double> alpha;
  double beta = 0.1;
  double clamp = kDefaultClamp;
  std::vector<int> n_list{16, 32, 64, 128, 256};
  int samples = 200;
  std::uint64_t seed = 0;
  std::string reference = "exact";
  int refine = 64;
  int pairs = 2000;
  std::string out;
};

void add_common(CLI::App* cmd, std::string& problem, std::string& stepper,
                std::optional<double>& alpha, double& beta, double& clamp,
                std::vector<int>& n_list, int& samples, std::uint64_t& seed, std::string& out) {
  cmd->add_option("--problem", problem, "problem key")
      ->check(CLI::IsMember(problem_keys()))
      ->capture_default_str();
  cmd->add_option("--stepper", stepper, "explicit | implicit")
      ->check(CLI::IsMember({"explicit", "implicit"}))
      ->capture_default_str();
  cmd->add_option("--alpha", alpha, "controller tolerance (default 0.5 adaptive1, 0.9 adaptive2)");
  cmd->add_option("--beta", beta, "Adaptive-II stopping fraction")->capture_default_str();
  cmd->add_option("--clamp", clamp, "cap on |q_ij| in the controllers")->capture_default_str();
  cmd->add_option("--N", n_list, "comma-separated N values, h = T/N")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--samples", samples, "Monte Carlo samples per N")->capture_default_str();
  cmd->add_option("--seed", seed, "base seed")->capture_default_str();
  cmd->add_option("--out", out, "output directory")->required();
}

int run(const RunOptions& o) {
  std::vector<ErrorStats> all;
  for (const auto& name : o.methods) {
    ExperimentConfig cfg;
    cfg.problem = o.problem;
    cfg.method = parse_method(name);
    cfg.stepper = parse_stepper(o.stepper);
    cfg.alpha = o.alpha;
    cfg.beta = o.beta;
    cfg.clamp = o.clamp;
    cfg.n_list = o.n_list;
    cfg.samples = o.samples;
    cfg.seed = o.seed;
    cfg.threads = o.threads;

    const auto start = std::chrono::steady_clock::now();
    auto rows = run_experiment(cfg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::printf("%-10s %6s %12s %12s %12s %12s %8s\n", "method", "N", "mean_steps",
                "sigma_steps", "E2", "sigma_E", "failed");
    for (const auto& r : rows)
      std::printf("%-10s %6d %12.2f %12.2f %12.5g %12.5g %8zu\n", r.method.c_str(), r.n,
                  r.mean_steps, r.sigma_steps, r.e2, r.sigma_e, r.failures);
    try {
      const auto fit = convergence_slope(rows);
      std::printf("slope %.3f  95%% CI [%.3f, %.3f]\n", fit.slope, fit.interval.lo,
                  fit.interval.hi);
    } catch (const SdeError&) {
      std::printf("slope: N range too narrow for a fit\n");
    }
    std::printf("time %.2f s\n\n", secs);
    all.insert(all.end(), std::make_move_iterator(rows.begin()),
               std::make_move_iterator(rows.end()));
  }

  std::vector<ErrorStats> reference;
  for (const auto& r : all)
    if (r.method == "fixed") reference.push_back(r);
  for (const char* name : {"adaptive1", "adaptive2"}) {
    std::vector<ErrorStats> cand;
    for (const auto& r : all)
      if (r.method == name) cand.push_back(r);
    for (const auto& m : matched_comparison(reference, cand, Metric::e2))
      std::printf("%s vs fixed at %.1f steps: E2 ratio %.3f\n", name, m.mean_steps, m.ratio());
  }

  emit_outputs(all, o.out, !o.no_svg);
  return 0;
}

int diagnose(const DiagnoseOptions& o) {
  const SdeProblem problem = make_problem(o.problem);
  const Method method = parse_method(o.method);
  const StepperKind stepper = parse_stepper(o.stepper);
  const double alpha = o.alpha.value_or(default_alpha(method));
  detail::require(o.samples >= 1, ErrorKind::configuration, "samples must be >= 1");
  const TruncationReference ref = o.reference == "exact"
                                      ? TruncationReference::exact()
                                      : TruncationReference::fine_grid(o.refine);

  fs::create_directories(o.out);
  std::ostringstream csv;
  csv << "k,n,tau_k,tau_n,norm_X,h,sample_id\n";
  std::vector<TruncationReport> reports;
  for (int n : o.n_list) {
    const double h = problem.horizon() / n;
    const StepController controller = make_controller(method, h, alpha, o.beta, o.clamp);
    for (int s = 0; s < o.samples; ++s) {
      RngStream path(o.seed, static_cast<std::uint64_t>(s));
      RngStream bridge(o.seed + 1, static_cast<std::uint64_t>(s));
      const Trajectory traj = integrate(problem, controller, stepper, path);
      reports.push_back(local_truncation(problem, traj, ref, bridge, h));
      for (const auto& e : reports.back().partial_sums)
        csv << e.k << ',' << e.n << ',' << format_double(e.tau_k) << ','
            << format_double(e.tau_n) << ',' << format_double(e.norm_x) << ','
            << format_double(h) << ',' << s << '\n';
    }
  }
  write_file(fs::path(o.out) / "truncation.csv", csv.str());

  if (o.n_list.size() >= 2) {
    const auto order = step_order_fit(reports);
    std::printf("per-step error vs h: exponent %.3f\n", order.slope);
  }
  try {
    const auto fit = truncation_sum_scaling(reports, 0.9, 1000, o.seed);
    std::printf("X_kn 0.9-quantile: h exponent %.3f [%.3f, %.3f], time exponent %.3f [%.3f, %.3f]\n",
                fit.h_exponent, fit.h_interval.lo, fit.h_interval.hi, fit.time_exponent,
                fit.time_interval.lo, fit.time_interval.hi);
  } catch (const SdeError& e) {
    std::printf("X_kn scaling skipped: %s\n", e.what());
  }

  RngStream probe_stream(o.seed + 2, 0);
  const auto probe = flow_probe(problem, o.pairs, probe_stream, ref);
  std::printf("flow probe (%d pairs): max Lipschitz ratio %.4g, max increment ratio / (t-s)^1/2 %.4g, "
              "span exponent %.3f\n",
              o.pairs, probe.max_lipschitz, probe.max_scaled, probe.span_exponent);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive Euler-Maruyama error study"};
  app.require_subcommand(1);

  RunOptions ro;
  auto* run_cmd = app.add_subcommand("run", "Monte Carlo error statistics against N");
  add_common(run_cmd, ro.problem, ro.stepper, ro.alpha, ro.beta, ro.clamp, ro.n_list, ro.samples,
             ro.seed, ro.out);
  run_cmd->add_option("--method", ro.methods, "fixed | adaptive1 | adaptive2, comma-separated")
      ->delimiter(',')
      ->check(CLI::IsMember({"fixed", "adaptive1", "adaptive2"}))
      ->capture_default_str();
  run_cmd->add_option("--threads", ro.threads, "worker threads (0: all cores)")
      ->capture_default_str();
  run_cmd->add_flag("--no-svg", ro.no_svg, "skip the SVG charts");

  DiagnoseOptions dopt;
  auto* diag_cmd = app.add_subcommand("diagnose", "truncation-error and flow diagnostics");
  add_common(diag_cmd, dopt.problem, dopt.stepper, dopt.alpha, dopt.beta, dopt.clamp,
             dopt.n_list, dopt.samples, dopt.seed, dopt.out);
  diag_cmd->add_option("--method", dopt.method, "fixed | adaptive1 | adaptive2")
      ->check(CLI::IsMember({"fixed", "adaptive1", "adaptive2"}))
      ->capture_default_str();
  diag_cmd->add_option("--reference", dopt.reference, "exact | fine")
      ->check(CLI::IsMember({"exact", "fine"}))
      ->capture_default_str();
  diag_cmd->add_option("--refine", dopt.refine, "sub-steps per step for the fine reference")
      ->capture_default_str();
  diag_cmd->add_option("--pairs", dopt.pairs, "flow-probe pairs")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return run(ro);
    return diagnose(dopt);
  } catch (const SdeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
