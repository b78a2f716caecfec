// Acceptance runs. One line per criterion:
//   acceptance <criterion>... [--cache DIR]
// Criteria: exact-maps densities bridge reversibility mu-r coupling tails
// commutation robustness, or "all". Distributional reports are cached in DIR
// so the step-size comparison can reuse them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "slerev/commutation.hpp"
#include "slerev/experiments.hpp"
#include "slerev/report.hpp"
#include "slerev/stats.hpp"
#include "support.hpp"

using namespace slerev;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDistributionalDt = 1e-3;

struct Outcome {
  bool passed = true;
  std::vector<std::string> lines;

  void expect(bool ok, const std::string& what) {
    passed = passed && ok;
    lines.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string num(double v) { return detail::fmt(v); }

Params with_a(double a) { return Params::from_kappa(2.0 / a); }

// ---------------------------------------------------------------- exact maps

Outcome exact_maps() {
  Outcome out;
  double slit_err = 0.0;
  double slit_prime_err = 0.0;
  for (double a : {0.5, 0.75, 1.0}) {
    for (double c : {0.0, -0.7, 2.0}) {
      DrivingPath d;
      d.a = a;
      for (int k = 0; k <= 1000; ++k) {
        d.times.push_back(1.3 * k / 1000);
        d.values.push_back(c);
      }
      const auto atlas = atlas_from_driving(d);
      for (const Complex z : {Complex{0.3, 2.5}, Complex{-4.0, 0.2}, Complex{c, 1.7}, Complex{10.0, 10.0}}) {
        const Complex root = sqrt_upper((z - c) * (z - c) + 2.0 * a * 1.3);
        slit_err = std::max(slit_err, std::abs(evaluate_g(atlas, z) - (c + root)) / std::abs(c + root));
        const Complex prime = (z - c) / root;
        slit_prime_err = std::max(slit_prime_err, std::abs(evaluate_g_prime(atlas, z) - prime) / std::abs(prime));
      }
    }
  }
  out.expect(slit_err < 1e-10, "slit closed form, max relative error " + num(slit_err) + " < 1e-10");
  out.expect(slit_prime_err < 1e-10,
             "slit derivative closed form, max relative error " + num(slit_prime_err) + " < 1e-10");

  double cap_err = 0.0;
  double fd_err = 0.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(-3.0, 3.0);
  std::uniform_real_distribution<double> uy(0.0, 2.0);
  for (double kappa : {2.0, 8.0 / 3.0, 4.0}) {
    const Params p = Params::from_kappa(kappa);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      BrownianPath noise(seed);
      const auto atlas = atlas_from_driving(sle_to_infinity_driving(p, 1.0, 1.0 / 1024, noise));
      for (const Complex z : {Complex{0.0, 1e3}, Complex{-5.0, 1e3}, Complex{3.0, 1e3}}) {
        const double cap = (z * (evaluate_g(atlas, z) - z)).real();
        cap_err = std::max(cap_err, std::abs(cap - atlas.total_capacity()) / atlas.total_capacity());
      }
      const double floor = std::sqrt(2.0 * atlas.total_capacity()) + 0.25;
      const double h = 1e-5;
      for (int i = 0; i < 10; ++i) {
        const Complex z{ux(rng), floor + uy(rng)};
        const Complex fd = (evaluate_g(atlas, z + h) - evaluate_g(atlas, z - h)) / (2.0 * h);
        fd_err = std::max(fd_err, std::abs(evaluate_g_prime(atlas, z) - fd));
      }
    }
  }
  out.expect(cap_err < 1e-3, "capacity at |z| = 1e3, max relative error " + num(cap_err) + " < 1e-3");
  out.expect(fd_err < 1e-6, "derivative vs central differences, max error " + num(fd_err) + " < 1e-6");
  return out;
}

// ----------------------------------------------------------------- densities

Outcome densities() {
  using slerev::testing::integrate;
  using slerev::testing::integrate_half_line;
  Outcome out;
  double phi_res = 0.0;
  for (double a : {0.5, 0.6, 0.75, 1.0}) {
    const Params p = with_a(a);
    for (double x : {0.4, 1.0, 1.7}) {
      const double mass = integrate_half_line(
          [&](double t) { return t > 0.0 ? first_passage_density(p, x, t, true) : 0.0; }, x * x, x * x);
      phi_res = std::max(phi_res, std::abs(mass - 1.0));
    }
  }
  out.expect(phi_res < 1e-6, "hitting density normalization, max residual " + num(phi_res) + " < 1e-6");

  double q_res = 0.0;
  for (double a : {0.5, 0.6, 0.75, 1.0}) {
    const Params p = with_a(a);
    for (double x : {0.5, 1.0}) {
      for (double t : {0.3, 1.0}) {
        const double alive = integrate_half_line(
            [&](double y) { return y > 0.0 ? transition_density_killed(p, t, x, y) : 0.0; }, x, std::sqrt(t));
        const double dead = integrate(
            [&](double s) { return s > 0.0 ? first_passage_density(p, x, s, true) : 0.0; }, 0.0, t);
        q_res = std::max(q_res, std::abs(alive + dead - 1.0));
      }
    }
  }
  out.expect(q_res < 1e-5, "killed density mass conservation, max residual " + num(q_res) + " < 1e-5");

  const Params half = with_a(0.5);
  double levy = 0.0;
  double reflect = 0.0;
  for (double x : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    for (double t : {0.01, 0.2, 1.0, 3.0, 40.0}) {
      const double exact = x * std::pow(t, -1.5) * std::exp(-x * x / (2.0 * t)) / std::sqrt(2.0 * kPi);
      levy = std::max(levy, std::abs(first_passage_density(half, x, t, true) - exact));
      levy = std::max(levy, std::abs(first_passage_cdf(half, x, t) - std::erfc(x / std::sqrt(2.0 * t))));
      for (double y : {0.05, 0.9, 2.5}) {
        auto heat = [t](double d) { return std::exp(-d * d / (2.0 * t)) / std::sqrt(2.0 * kPi * t); };
        reflect = std::max(reflect, std::abs(transition_density_killed(half, t, x, y) - (heat(y - x) - heat(y + x))));
      }
    }
  }
  out.expect(levy < 1e-8, "a = 1/2 hitting law vs Levy density and cdf, max error " + num(levy) + " < 1e-8");
  out.expect(reflect < 1e-8, "a = 1/2 killed density vs reflection principle, max error " + num(reflect) + " < 1e-8");
  return out;
}

// -------------------------------------------------------------------- bridge

Outcome bridge() {
  Outcome out;
  const Params p = with_a(0.5);
  const double x0 = 1.0;
  const double t0 = 1.0;
  const double dt = 1e-4;
  const slerev::testing::TabulatedCdf cdf(
      [&](double y) { return y > 0.0 ? bridge_density(p, 0.5 * t0, x0, y, t0) : 0.0; }, 6.0, 3000);
  const std::size_t n = 100000;
  std::vector<double> mid(n);
  parallel_for(n, default_thread_count(), [&](std::size_t i) {
    BrownianPath noise(derive_seed(901, 0, i));
    BridgeOptions opts;
    opts.stop_time = 0.5 * t0;
    mid[i] = sample_bridge(p, x0, t0, dt, noise, opts).final_value();
  });
  const double ks = ks_statistic(mid, [&](double y) { return cdf(y); });
  out.expect(ks < 0.02, "bridge marginal at t0/2 vs density, KS " + num(ks) + " < 0.02 (1e5 paths, dt 1e-4)");

  // The weighted martingale stopped at min(t, exit from [x0/2, 2 x0]).
  const Params q = with_a(0.75);
  for (double t : {0.25, 0.5, 0.75}) {
    const std::size_t m = 64000;
    std::vector<double> values(m);
    parallel_for(m, default_thread_count(), [&](std::size_t i) {
      BrownianPath noise(derive_seed(902, static_cast<std::uint64_t>(t * 100), i));
      auto gap = sample_gap_process(q, x0, t, 1e-3, noise, 0.5 * x0, 2.0 * x0);
      const auto w = weight_trace(q, gap.path, gap.gprime, 2.0);
      values[i] = w.M_tilde.back() / w.M_tilde.front();
    });
    const auto est = mean_with_error(values);
    out.expect(std::abs(est.mean - 1.0) < 3.0 * est.std_error,
               "stopped weighted martingale at t = " + num(t) + ": mean " + num(est.mean) + " +- " +
                   num(est.std_error) + " within 3 SE of 1");
  }
  return out;
}

// ------------------------------------------------------- cached experiments

struct Cache {
  std::optional<fs::path> dir;

  fs::path path(const std::string& key, double dt) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", dt);
    return *dir / (key + "_dt" + buf + ".json");
  }

  std::optional<ExperimentReport> load(const std::string& key, const ExperimentConfig& cfg) const {
    if (!dir) return std::nullopt;
    std::ifstream in(path(key, cfg.dt));
    if (!in) return std::nullopt;
    try {
      auto r = report_from_json(ordered_json::parse(in));
      if (r.samples.dt != cfg.dt || r.samples.n != cfg.n || r.samples.seed != cfg.seed) return std::nullopt;
      return r;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  void store(const std::string& key, const ExperimentConfig& cfg, const ExperimentReport& r) const {
    if (!dir) return;
    fs::create_directories(*dir);
    write_text_file(path(key, cfg.dt), to_json(r).dump(1) + "\n");
  }
};

using Runner = std::function<ExperimentReport(const ExperimentConfig&)>;

struct Distributional {
  std::string key;
  ExperimentConfig cfg;
  Runner run;
};

ExperimentConfig base_config(double kappa) {
  ExperimentConfig cfg;
  cfg.params = Params::from_kappa(kappa);
  cfg.dt = kDistributionalDt;
  cfg.n = 2000;
  cfg.seed = 7;
  return cfg;
}

std::vector<Distributional> distributional_runs() {
  std::vector<Distributional> v;
  for (auto [label, kappa] : {std::pair{"2", 2.0}, std::pair{"8_3", 8.0 / 3.0}, std::pair{"3", 3.0},
                              std::pair{"4", 4.0}}) {
    v.push_back({std::string("reversibility_kappa") + label, base_config(kappa),
                 [](const ExperimentConfig& c) { return reversibility_experiment(c); }});
  }
  v.push_back({"mu-r", base_config(4.0), [](const ExperimentConfig& c) { return mu_r_experiment(c); }});
  v.push_back({"coupling", base_config(4.0), [](const ExperimentConfig& c) { return coupling_experiment(c); }});
  v.push_back({"tails", base_config(4.0), [](const ExperimentConfig& c) { return tails_experiment(c); }});
  v.push_back({"commutation", base_config(8.0 / 3.0),
               [](const ExperimentConfig& c) { return commutation_experiment(c); }});
  return v;
}

ExperimentReport run_cached(const Distributional& d, const ExperimentConfig& cfg, const Cache& cache) {
  if (auto r = cache.load(d.key, cfg)) return *r;
  auto r = d.run(cfg);
  cache.store(d.key, cfg, r);
  return r;
}

void add_report(Outcome& out, const std::string& label, const ExperimentReport& r,
                const std::vector<std::string>& only = {}) {
  for (const auto& c : r.checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    out.expect(c.passed, label + c.name + ": " + c.detail);
  }
}

const Distributional& find_run(const std::vector<Distributional>& runs, const std::string& key) {
  for (const auto& d : runs)
    if (d.key == key) return d;
  throw std::logic_error("no run " + key);
}

Outcome reversibility(const Cache& cache) {
  Outcome out;
  for (const auto& d : distributional_runs()) {
    if (d.key.rfind("reversibility", 0) != 0) continue;
    add_report(out, "kappa = " + num(d.cfg.params.kappa) + ": ", run_cached(d, d.cfg, cache));
  }
  return out;
}

Outcome single(const Cache& cache, const std::string& key) {
  Outcome out;
  const auto runs = distributional_runs();
  const auto& d = find_run(runs, key);
  const auto r = run_cached(d, d.cfg, cache);
  add_report(out, "", r);
  if (key == "coupling") {
    for (const auto& s : r.statistics) {
      if (s.name.rfind("c[", 0) == 0 || s.name.rfind("exceedance", 0) == 0 || s.name == "c_fitted") {
        out.lines.push_back("     " + s.name + " = " + num(s.value) + " +- " + num(s.std_error));
      }
    }
  }
  if (key == "tails") {
    for (const auto& s : r.statistics) {
      if (s.fitted) out.lines.push_back("     " + s.name + " = " + num(s.value) + " +- " + num(s.std_error));
    }
  }
  return out;
}

Outcome robustness(const Cache& cache) {
  Outcome out;
  for (const auto& d : distributional_runs()) {
    const auto coarse = run_cached(d, d.cfg, cache);
    const auto cmp = compare_discretizations(
        d.cfg, [&](const ExperimentConfig& c) { return run_cached(d, c, cache); }, coarse);
    for (const auto& c : cmp.checks) out.expect(c.passed, d.key + ": " + c.name + ": " + c.detail);
  }
  return out;
}

const std::vector<std::string> kCriteria = {"exact-maps", "densities", "bridge", "reversibility", "mu-r",
                                            "coupling", "tails", "commutation", "robustness"};

Outcome run_criterion(const std::string& name, const Cache& cache) {
  if (name == "exact-maps") return exact_maps();
  if (name == "densities") return densities();
  if (name == "bridge") return bridge();
  if (name == "reversibility") return reversibility(cache);
  if (name == "robustness") return robustness(cache);
  return single(cache, name);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted;
  Cache cache;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cache" && i + 1 < argc) {
      cache.dir = argv[++i];
    } else if (arg == "all") {
      wanted = kCriteria;
    } else if (std::find(kCriteria.begin(), kCriteria.end(), arg) != kCriteria.end()) {
      wanted.push_back(arg);
    } else {
      std::fprintf(stderr, "unknown criterion '%s'\n", arg.c_str());
      return 1;
    }
  }
  if (wanted.empty()) wanted = kCriteria;

  bool all = true;
  std::map<std::string, bool> verdicts;
  for (const auto& name : wanted) {
    Outcome o;
    try {
      o = run_criterion(name, cache);
    } catch (const std::exception& e) {
      o.expect(false, std::string("error: ") + e.what());
    }
    for (const auto& line : o.lines) std::printf("    %s\n", line.c_str());
    verdicts[name] = o.passed;
    all = all && o.passed;
    std::printf("%s %s\n", o.passed ? "PASS" : "FAIL", name.c_str());
    std::fflush(stdout);
  }
  if (wanted.size() > 1) {
    std::printf("summary:\n");
    for (const auto& name : wanted) std::printf("  %s %s\n", verdicts[name] ? "PASS" : "FAIL", name.c_str());
  }
  return all ? 0 : 1;
}
