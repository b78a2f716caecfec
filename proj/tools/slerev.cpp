// Command-line entry point: slerev run <experiment> [options]

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "slerev/config.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitError = 1;
constexpr int kExitFail = 2;

struct Flag {
  const char* key;
  const char* name;
  const char* help;
  std::string value;
  CLI::Option* option = nullptr;
};

void print_summary(const slerev::RunResult& result) {
  const auto& r = result.report;
  std::printf("%s: %s\n", r.name.c_str(), r.verdict() ? "pass" : "fail");
  for (const auto& c : r.checks) {
    std::printf("  [%s] %s: %s\n", c.passed ? "pass" : "FAIL", c.name.c_str(), c.detail.c_str());
  }
  for (const auto& w : r.warnings) std::printf("  warning: %s\n", w.c_str());
  if (result.comparison) {
    std::printf("dt vs dt/2: %s\n", result.comparison->verdict() ? "pass" : "fail");
    for (const auto& c : result.comparison->checks) {
      if (!c.passed) std::printf("  [FAIL] %s: %s\n", c.name.c_str(), c.detail.c_str());
    }
  }
  std::printf("report: %s\n", result.report_path.string().c_str());
  if (result.samples_path) std::printf("samples: %s\n", result.samples_path->string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SLE reversibility experiments"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "Run one experiment and write its report");

  std::string experiment;
  std::string names;
  for (auto n : slerev::kExperimentNames) names += (names.empty() ? "" : ", ") + std::string(n);
  run->add_option("experiment", experiment, "One of: " + names)->required();

  std::string config_path;
  run->add_option("--config", config_path, "key = value configuration file (flags override it)");
  std::vector<Flag> flags = {
      {"kappa", "--kappa", "SLE parameter in (0, 8); default 4 (8/3 for commutation)", {}},
      {"x", "--x", "boundary point x > 0; default 1", {}},
      {"t0", "--t0", "total duration; default 1", {}},
      {"dt", "--dt", "time step; default 1e-4", {}},
      {"N", "--N", "samples per batch; default 2000", {}},
      {"seed", "--seed", "master seed; default 7", {}},
      {"threads", "--threads", "worker threads; default: available parallelism", {}},
      {"output_dir", "--output-dir", "output directory (SLEREV_OUTPUT_DIR overrides)", {}},
      {"replicates", "--replicates", "replicate seeds for majority tests; default 10", {}},
      {"permutations", "--permutations", "permutations per energy test; default 500", {}},
  };
  for (auto& f : flags) f.option = run->add_option(f.name, f.value, f.help);
  bool compare = false;
  auto* compare_flag =
      run->add_flag("--compare-half-dt", compare, "also run at dt/2 and compare verdicts and fits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitError;
  }

  try {
    slerev::RunConfig cfg;
    if (!config_path.empty()) {
      for (const auto& [key, value] : slerev::read_config_file(config_path)) {
        slerev::apply_setting(cfg, key, value);
      }
    }
    cfg.experiment = experiment;
    for (const auto& f : flags) {
      if (f.option->count() > 0) slerev::apply_setting(cfg, f.key, f.value);
    }
    if (compare_flag->count() > 0) cfg.compare_half_dt = compare;
    slerev::validate(cfg);
    const auto result = slerev::run_experiment(cfg);
    print_summary(result);
    return result.passed() ? kExitPass : kExitFail;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
}
