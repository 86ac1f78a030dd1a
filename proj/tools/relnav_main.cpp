#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <vector>

#include <CLI11.hpp>

#include "relnav/config.hpp"
#include "relnav/jacobian_check.hpp"
#include "relnav/metrics.hpp"
#include "relnav/scenario.hpp"

namespace {

constexpr const char* kVersion = "relnav 1.0.0";

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // internal / validation failure
constexpr int kExitUsage = 2;    // usage or config error

struct RunOutputs {
  relnav::ErrorStats stats;
  bool aborted = false;
};

RunOutputs execute_run(const relnav::ScenarioConfig& config, const std::string& out_dir) {
  const relnav::RunResult result = relnav::run_closed_loop(config);

  std::filesystem::create_directories(out_dir);
  relnav::export_trace(result.trace, out_dir + "/trace.csv");

  RunOutputs outputs;
  outputs.aborted = result.aborted;
  if (result.trace.size() >= 2) {
    outputs.stats = relnav::compute_stats(result.trace);
    std::ofstream txt(out_dir + "/summary.txt");
    txt << relnav::summarize(outputs.stats);
    std::ofstream kv(out_dir + "/summary.kv");
    kv << relnav::summarize_kv(outputs.stats);
  }
  return outputs;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relnav: UWB/IMU/flow relative-localization simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string trace_path;
  std::int64_t seed_override = -1;
  int sweep_seeds = 8;
  int trials = 1000;
  double tolerance = relnav::kJacobianTolerance;

  auto* run = app.add_subcommand("run", "run one closed-loop scenario and export trace + summary");
  run->add_option("config", config_path, "scenario config file (sectioned key=value)")->required();
  run->add_option("--out", out_dir, "output directory for trace.csv, summary.txt, summary.kv");
  run->add_option("--seed", seed_override, "override [scenario] seed (non-negative integer)");

  auto* sweep = app.add_subcommand("sweep", "run N seeds of one scenario and aggregate the stats");
  sweep->add_option("config", config_path, "scenario config file (sectioned key=value)")->required();
  sweep->add_option("--seeds", sweep_seeds, "number of consecutive seeds to run")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "output directory for sweep.txt and sweep.kv");
  sweep->add_option("--seed", seed_override, "first seed of the sweep (default: config seed)");

  auto* check = app.add_subcommand("check-jacobians",
                                   "validate analytic Jacobians against finite differences");
  check->add_option("--trials", trials, "random states per model")->check(CLI::PositiveNumber);
  check->add_option("--tol", tolerance, "worst relative error allowed (dimensionless)");

  auto* replay = app.add_subcommand("replay", "recompute summary statistics from a trace CSV");
  replay->add_option("trace", trace_path, "trace.csv produced by 'run'")->required();

  app.add_subcommand("version", "print version and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("version")) {
      std::cout << kVersion << "\n";
      return kExitOk;
    }

    if (app.got_subcommand("check-jacobians")) {
      const auto reports = relnav::check_all_jacobians(trials, 20240117);
      bool ok = true;
      for (const auto& r : reports) {
        std::printf("%-22s worst error %.3e over %d states\n", r.model.c_str(),
                    r.worst_error, r.trials);
        ok = ok && r.worst_error <= tolerance;
      }
      std::printf("%s (tolerance %.1e)\n", ok ? "all jacobians consistent" : "JACOBIAN MISMATCH",
                  tolerance);
      return ok ? kExitOk : kExitFailure;
    }

    if (app.got_subcommand("replay")) {
      relnav::Trace trace;
      try {
        trace = relnav::import_trace(trace_path);
      } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
      }
      std::cout << relnav::summarize(relnav::compute_stats(trace));
      return kExitOk;
    }

    relnav::ScenarioConfig config;
    try {
      config = relnav::parse_scenario_config(config_path);
    } catch (const relnav::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitUsage;
    }
    if (seed_override >= 0) {
      config.seed = static_cast<std::uint64_t>(seed_override);
    }

    if (app.got_subcommand("run")) {
      const RunOutputs outputs = execute_run(config, out_dir);
      if (outputs.aborted) {
        std::cerr << "run aborted: estimator divergence (trace flagged in " << out_dir << ")\n";
        return kExitFailure;
      }
      std::cout << relnav::summarize(outputs.stats);
      return kExitOk;
    }

    // sweep
    std::vector<relnav::ErrorStats> all;
    int failures = 0;
    for (int i = 0; i < sweep_seeds; ++i) {
      relnav::ScenarioConfig cfg = config;
      cfg.seed = config.seed + static_cast<std::uint64_t>(i);
      try {
        const relnav::RunResult result = relnav::run_closed_loop(cfg);
        if (result.aborted || result.trace.size() < 2) {
          failures++;
          std::cerr << "seed " << cfg.seed << " failed: "
                    << (result.aborted ? result.abort_reason : "trace too short") << "\n";
          continue;
        }
        all.push_back(relnav::compute_stats(result.trace));
      } catch (const std::exception& e) {
        failures++;
        std::cerr << "seed " << cfg.seed << " failed: " << e.what() << "\n";
      }
    }
    if (all.empty()) {
      std::cerr << "sweep failed: no successful runs\n";
      return kExitFailure;
    }

    const auto axis_values = [&](auto getter) {
      std::array<std::vector<double>, 3> per_axis;
      for (const auto& s : all) {
        const relnav::Vec3 v = getter(s);
        for (int k = 0; k < 3; ++k) per_axis[static_cast<std::size_t>(k)].push_back(v(k));
      }
      return per_axis;
    };

    std::filesystem::create_directories(out_dir);
    std::ofstream kv(out_dir + "/sweep.kv");
    std::ofstream txt(out_dir + "/sweep.txt");
    const auto report = [&](const char* name, auto getter) {
      const auto per_axis = axis_values(getter);
      const char* axes[3] = {"x", "y", "z"};
      for (int k = 0; k < 3; ++k) {
        const auto& v = per_axis[static_cast<std::size_t>(k)];
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) /
                            static_cast<double>(v.size());
        double sq = 0.0;
        for (double x : v) sq += (x - mean) * (x - mean);
        const double spread = std::sqrt(sq / static_cast<double>(v.size()));
        const double med = median(v);
        char line[160];
        std::snprintf(line, sizeof(line), "%s_%s: mean %.4f +- %.4f (median %.4f)\n",
                      name, axes[k], mean, spread, med);
        txt << line;
        std::cout << line;
        kv << name << "_" << axes[k] << "_mean=" << mean << "\n";
        kv << name << "_" << axes[k] << "_sd=" << spread << "\n";
        kv << name << "_" << axes[k] << "_median=" << med << "\n";
      }
    };
    report("rmse", [](const relnav::ErrorStats& s) { return s.rmse; });
    report("sd", [](const relnav::ErrorStats& s) { return s.sd; });
    report("max_abs", [](const relnav::ErrorStats& s) { return s.max_abs; });
    kv << "runs=" << all.size() << "\nfailures=" << failures << "\n";
    std::cout << "sweep complete: " << all.size() << " runs, " << failures << " failures\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
