#pragma once

// Run configuration: key = value files, validation, and the mapping onto
// experiment settings.

#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "slerev/experiments.hpp"
#include "slerev/report.hpp"

namespace slerev {

inline constexpr std::array<std::string_view, 7> kExperimentNames = {
    "sample", "reversibility", "mu-r", "coupling", "tails", "commutation", "density-check"};

inline bool is_experiment_name(std::string_view name) {
  for (auto n : kExperimentNames)
    if (n == name) return true;
  return false;
}

struct RunConfig {
  std::string experiment;
  double kappa = 4.0;
  bool kappa_given = false;
  double x = 1.0;
  double t0 = 1.0;
  double dt = 1e-4;
  std::size_t n = 2000;
  std::uint64_t seed = 7;
  unsigned threads = default_thread_count();
  std::filesystem::path output_dir = ".";
  bool compare_half_dt = false;
  Thresholds thresholds;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// A decimal number or a fraction such as 8/3.
inline double parse_real(const std::string& key, const std::string& v) {
  auto bad = [&] { return ConfigError("'" + key + "' expects a number, got '" + v + "'"); };
  const char* s = v.c_str();
  char* end = nullptr;
  double d = std::strtod(s, &end);
  if (v.empty() || end == s) throw bad();
  if (*end == '/') {
    const char* q = end + 1;
    const double den = std::strtod(q, &end);
    if (end == q || den == 0.0) throw bad();
    d /= den;
  }
  if (*end != '\0') throw bad();
  return d;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw ConfigError("'" + key + "' is out of range: " + v);
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace detail

/// Sets one key. Unknown keys are errors.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_real;
  using detail::parse_unsigned;
  auto& th = cfg.thresholds;
  if (key == "experiment") cfg.experiment = value;
  else if (key == "kappa") { cfg.kappa = parse_real(key, value); cfg.kappa_given = true; }
  else if (key == "x") cfg.x = parse_real(key, value);
  else if (key == "t0") cfg.t0 = parse_real(key, value);
  else if (key == "dt") cfg.dt = parse_real(key, value);
  else if (key == "N") cfg.n = parse_unsigned(key, value);
  else if (key == "seed") cfg.seed = parse_unsigned(key, value);
  else if (key == "threads") cfg.threads = static_cast<unsigned>(parse_unsigned(key, value));
  else if (key == "output_dir") cfg.output_dir = value;
  else if (key == "compare_half_dt") cfg.compare_half_dt = detail::parse_bool(key, value);
  else if (key == "p_min") th.p_min = parse_real(key, value);
  else if (key == "power_p_max") th.power_p_max = parse_real(key, value);
  else if (key == "replicates") th.replicates = static_cast<int>(parse_unsigned(key, value));
  else if (key == "min_passing") th.min_passing = static_cast<int>(parse_unsigned(key, value));
  else if (key == "min_passing_commutation") th.min_passing_commutation = static_cast<int>(parse_unsigned(key, value));
  else if (key == "permutations") th.permutations = static_cast<int>(parse_unsigned(key, value));
  else if (key == "stability_ratio") th.stability_ratio = parse_real(key, value);
  else if (key == "drift_corruption") th.drift_corruption = parse_real(key, value);
  else if (key == "driving_corruption") th.driving_corruption = parse_real(key, value);
  else if (key == "gaussian_tail_slope") th.gaussian_tail_slope = parse_real(key, value);
  else if (key == "view_agreement") th.view_agreement = parse_real(key, value);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

/// Reads `key = value` lines; '#' starts a comment.
inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = detail::trim(std::string_view(body).substr(0, eq));
    const auto value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

/// Checks every constraint before any sampling. Commutation runs at
/// kappa = 8/3; when kappa was not given it is set there.
inline void validate(RunConfig& cfg) {
  if (!is_experiment_name(cfg.experiment)) {
    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
  }
  if (cfg.experiment == "commutation" && !cfg.kappa_given) cfg.kappa = kKappaZeroCharge;
  if (!(cfg.kappa > 0.0 && cfg.kappa < 8.0)) throw ConfigError("kappa must lie in (0, 8)");
  if (!(cfg.x > 0.0)) throw ConfigError("x must be positive");
  if (!(cfg.t0 > 0.0)) throw ConfigError("t0 must be positive");
  if (!(cfg.dt > 0.0 && cfg.dt <= cfg.t0)) throw ConfigError("dt must lie in (0, t0]");
  if (cfg.n == 0) throw ConfigError("N must be positive");
  if (cfg.threads == 0) throw ConfigError("threads must be positive");
  const auto& th = cfg.thresholds;
  if (!(th.p_min > 0.0 && th.p_min < 1.0)) throw ConfigError("p_min must lie in (0, 1)");
  if (!(th.power_p_max > 0.0 && th.power_p_max < 1.0)) throw ConfigError("power_p_max must lie in (0, 1)");
  if (th.replicates < 1) throw ConfigError("replicates must be positive");
  if (th.permutations < 1) throw ConfigError("permutations must be positive");
  const std::string& e = cfg.experiment;
  if (e == "commutation") {
    if (th.min_passing_commutation > th.replicates) {
      throw ConfigError("min_passing_commutation exceeds replicates");
    }
  } else if (th.min_passing > th.replicates) {
    throw ConfigError("min_passing exceeds replicates");
  }
  if ((e == "reversibility" || e == "mu-r" || e == "coupling") && cfg.kappa > 4.0) {
    throw ConfigError(e + " requires kappa <= 4");
  }
  if ((e == "mu-r" || e == "coupling" || e == "commutation") && cfg.t0 != 1.0) {
    throw ConfigError(e + " is defined with t0 = 1");
  }
  if (e == "commutation" && !is_zero_charge_kappa(cfg.kappa)) {
    throw ConfigError("commutation requires kappa = 8/3");
  }
}

inline ExperimentConfig to_experiment_config(const RunConfig& cfg) {
  ExperimentConfig e;
  e.params = Params::from_kappa(cfg.kappa);
  e.x = cfg.x;
  e.t0 = cfg.t0;
  e.dt = cfg.dt;
  e.n = cfg.n;
  e.seed = cfg.seed;
  e.threads = cfg.threads;
  e.thresholds = cfg.thresholds;
  return e;
}

/// Echo of every setting that affects the statistics. The thread count and
/// output directory are left out: results do not depend on them.
inline ordered_json to_json(const RunConfig& cfg) {
  const auto& th = cfg.thresholds;
  return ordered_json{
      {"experiment", cfg.experiment},
      {"kappa", cfg.kappa},
      {"x", cfg.x},
      {"t0", cfg.t0},
      {"dt", cfg.dt},
      {"N", cfg.n},
      {"seed", cfg.seed},
      {"compare_half_dt", cfg.compare_half_dt},
      {"thresholds",
       {{"p_min", th.p_min},
        {"power_p_max", th.power_p_max},
        {"replicates", th.replicates},
        {"min_passing", th.min_passing},
        {"min_passing_commutation", th.min_passing_commutation},
        {"permutations", th.permutations},
        {"stability_ratio", th.stability_ratio},
        {"drift_corruption", th.drift_corruption},
        {"driving_corruption", th.driving_corruption},
        {"gaussian_tail_slope", th.gaussian_tail_slope},
        {"view_agreement", th.view_agreement}}}};
}

/// Output directory: SLEREV_OUTPUT_DIR wins over the configuration.
inline std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("SLEREV_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

struct RunResult {
  ExperimentReport report;
  std::optional<DiscretizationComparison> comparison;
  std::filesystem::path report_path;
  std::optional<std::filesystem::path> samples_path;

  bool passed() const { return report.verdict() && (!comparison || comparison->verdict()); }
};

/// Runs a validated configuration and writes its outputs.
inline RunResult run_experiment(const RunConfig& cfg) {
  const ExperimentConfig ecfg = to_experiment_config(cfg);
  const auto dir = resolve_output_dir(cfg);
  std::filesystem::create_directories(dir);
  RunResult out;
  std::vector<MapSample> batch;
  std::function<ExperimentReport(const ExperimentConfig&)> run;
  const std::string& e = cfg.experiment;
  if (e == "reversibility") run = [](const ExperimentConfig& c) { return reversibility_experiment(c); };
  else if (e == "mu-r") run = [](const ExperimentConfig& c) { return mu_r_experiment(c); };
  else if (e == "coupling") run = [](const ExperimentConfig& c) { return coupling_experiment(c); };
  else if (e == "tails") run = [](const ExperimentConfig& c) { return tails_experiment(c); };
  else if (e == "commutation") run = [](const ExperimentConfig& c) { return commutation_experiment(c); };
  else if (e == "density-check") run = [](const ExperimentConfig& c) { return density_check(c); };
  else run = [&batch](const ExperimentConfig& c) { return sample_experiment(c, batch); };

  out.report = run(ecfg);
  if (e == "sample") {
    out.samples_path = dir / (e + ".samples.csv");
    emit_csv(batch, *out.samples_path);
  }
  if (cfg.compare_half_dt) {
    std::vector<MapSample> unused;
    auto rerun = e == "sample" ? std::function<ExperimentReport(const ExperimentConfig&)>(
                                     [&unused](const ExperimentConfig& c) { return sample_experiment(c, unused); })
                               : run;
    out.comparison = compare_discretizations(ecfg, rerun, out.report);
  }
  out.report_path = dir / (e + ".report.json");
  const auto doc = report_document(to_json(cfg), out.report,
                                   out.comparison ? &*out.comparison : nullptr);
  write_text_file(out.report_path, doc.dump(2) + "\n");
  return out;
}

}  // namespace slerev
