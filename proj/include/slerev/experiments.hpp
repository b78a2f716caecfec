#pragma once

// Statistical experiments: reversibility, constancy of mu_r, coupling rates,
// tail bounds for the conditioned Bessel process, commutation at kappa = 8/3,
// and quadrature checks of the densities. Each returns a report whose verdict
// is the conjunction of its declared checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "slerev/bessel.hpp"
#include "slerev/commutation.hpp"
#include "slerev/sampler.hpp"
#include "slerev/stats.hpp"

namespace slerev {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// A reported number. Every statistic carries a standard error, a
/// permutation count or the sample size it was computed from.
struct Statistic {
  std::string name;
  double value = 0.0;
  double std_error = kNaN;
  int permutations = 0;
  std::size_t samples = 0;
  bool fitted = false;  // a fitted constant, compared across step sizes
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SamplesMeta {
  std::size_t n = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> replicate_seeds;
};

struct ExperimentReport {
  std::string name;
  std::vector<std::pair<std::string, double>> params;
  std::vector<Statistic> statistics;
  SamplesMeta samples;
  std::vector<Check> checks;
  std::vector<std::string> warnings;

  bool verdict() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }

  const Statistic* find(const std::string& stat) const {
    for (const auto& s : statistics)
      if (s.name == stat) return &s;
    return nullptr;
  }

  const Check* find_check(const std::string& check) const {
    for (const auto& c : checks)
      if (c.name == check) return &c;
    return nullptr;
  }

  Statistic& add(Statistic s) { return statistics.emplace_back(std::move(s)); }
  void check(std::string check_name, bool passed, std::string detail) {
    checks.push_back({std::move(check_name), passed, std::move(detail)});
  }
};

/// Acceptance thresholds, kept in configuration rather than in the code.
struct Thresholds {
  double p_min = 0.01;          // null tests pass when p > p_min
  double power_p_max = 0.01;    // power checks pass when p < power_p_max
  int replicates = 10;
  int min_passing = 7;          // replicates that must pass a null test
  int min_passing_commutation = 6;
  int permutations = 500;
  double stability_ratio = 2.0;  // coupling constant may grow by at most this factor
  double drift_corruption = 1.1;
  double driving_corruption = 1.2;
  double gaussian_tail_slope = -0.25;
  double view_agreement = 1e-2;  // relative tolerance between the two weight perspectives
};

struct ExperimentConfig {
  Params params = Params::from_kappa(4.0);
  double x = 1.0;
  double t0 = 1.0;
  double dt = 1e-3;
  std::size_t n = 2000;
  std::uint64_t seed = 7;
  unsigned threads = default_thread_count();
  Thresholds thresholds;
};

namespace detail {

inline ExperimentReport start_report(const std::string& name, const ExperimentConfig& cfg) {
  ExperimentReport r;
  r.name = name;
  r.params = {{"kappa", cfg.params.kappa}, {"a", cfg.params.a}, {"b", cfg.params.b},
              {"x", cfg.x},                {"t0", cfg.t0},      {"dt", cfg.dt}};
  r.samples.n = cfg.n;
  r.samples.dt = cfg.dt;
  r.samples.seed = cfg.seed;
  return r;
}

inline Statistic p_value_stat(const std::string& name, const EnergyTestResult& et) {
  Statistic s;
  s.name = name;
  s.value = et.p_value;
  s.permutations = et.permutations;
  return s;
}

inline Statistic mean_stat(const std::string& name, const MeanEstimate& m, bool fitted = false) {
  Statistic s;
  s.name = name;
  s.value = m.mean;
  s.std_error = m.std_error;
  s.samples = m.count;
  s.fitted = fitted;
  return s;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void require_simple(const ExperimentConfig& cfg) {
  if (!cfg.params.simple_curves()) throw ConfigError("experiment requires kappa <= 4");
}

inline EnergyTestResult energy(std::span<const MapSample> A, std::span<const MapSample> B,
                               const ExperimentConfig& cfg, std::uint64_t seed,
                               ExperimentReport& report, const std::string& label) {
  auto et = energy_two_sample_test(A, B, cfg.thresholds.permutations, seed);
  if (et.degenerate) report.warnings.push_back(label + ": degenerate batches, p set to 1");
  return et;
}

// Majority check over replicate p-values.
inline void majority_check(ExperimentReport& report, const std::string& name,
                           const std::vector<double>& ps, double p_min, int min_passing) {
  const int passing =
      static_cast<int>(std::count_if(ps.begin(), ps.end(), [&](double v) { return v > p_min; }));
  report.check(name, passing >= min_passing,
               std::to_string(passing) + "/" + std::to_string(ps.size()) + " replicates with p > " +
                   fmt(p_min) + " (need " + std::to_string(min_passing) + ")");
}

// Majority check that a corrupted alternative is rejected.
inline void power_check(ExperimentReport& report, const std::string& name,
                        const std::vector<double>& ps, double p_max, int min_passing) {
  const int rejecting =
      static_cast<int>(std::count_if(ps.begin(), ps.end(), [&](double v) { return v < p_max; }));
  report.check(name, rejecting >= min_passing,
               std::to_string(rejecting) + "/" + std::to_string(ps.size()) + " replicates with p < " +
                   fmt(p_max) + " (need " + std::to_string(min_passing) + ")");
}

// Replicate seed for experiment `tag`.
inline std::uint64_t replicate_seed(const ExperimentConfig& cfg, std::uint64_t tag, int rep) {
  return derive_seed(cfg.seed, tag, static_cast<std::uint64_t>(rep));
}

enum Tag : std::uint64_t {
  kTagReversibility = 101,
  kTagMuR = 201,
  kTagCoupling = 301,
  kTagBootstrap = 302,
  kTagTails = 401,
  kTagCommutation = 501,
  kTagCommutationWeights = 502,
  kTagSample = 601,
  kTagPermutation = 0xE7,
};

}  // namespace detail

/// mu#(0, x; 1) against mu#(x, 0; 1): energy test in each replicate plus
/// per-coordinate KS on the first replicate; power checks with a corrupted
/// bridge drift and a scaled driving function.
inline ExperimentReport reversibility_experiment(const ExperimentConfig& cfg) {
  detail::require_simple(cfg);
  auto report = detail::start_report("reversibility", cfg);
  const auto& p = cfg.params;
  const auto& th = cfg.thresholds;
  const TestSet ts = TestSet::for_params(p);
  Corruption drift;
  drift.drift_scale = th.drift_corruption;
  Corruption scaled;
  scaled.driving_scale = th.driving_corruption;
  std::vector<double> ps, ps_drift, ps_scale;
  for (int rep = 0; rep < th.replicates; ++rep) {
    const auto seed = detail::replicate_seed(cfg, detail::kTagReversibility, rep);
    report.samples.replicate_seeds.push_back(seed);
    const std::string r = "[" + std::to_string(rep) + "]";
    const auto A = musharp_batch(p, 0.0, cfg.x, cfg.t0, cfg.dt, cfg.n, seed, 1, ts, cfg.threads);
    const auto B = musharp_batch(p, cfg.x, 0.0, cfg.t0, cfg.dt, cfg.n, seed, 2, ts, cfg.threads);
    const auto et = detail::energy(A, B, cfg, derive_seed(seed, detail::kTagPermutation), report,
                                   "replicate " + std::to_string(rep));
    report.add(detail::p_value_stat("energy_p" + r, et));
    ps.push_back(et.p_value);

    // Power: the reversed direction with drift 2a -> 2a * drift_corruption,
    // and the forward direction with a scaled driving function.
    const auto bent =
        musharp_batch(p, cfg.x, 0.0, cfg.t0, cfg.dt, cfg.n, seed, 3, ts, cfg.threads, drift);
    const auto et_drift = detail::energy(A, bent, cfg, derive_seed(seed, detail::kTagPermutation, 1),
                                         report, "power");
    report.add(detail::p_value_stat("power_drift_p" + r, et_drift));
    ps_drift.push_back(et_drift.p_value);
    const auto stretched =
        musharp_batch(p, 0.0, cfg.x, cfg.t0, cfg.dt, cfg.n, seed, 4, ts, cfg.threads, scaled);
    const auto et_scale = detail::energy(
        B, stretched, cfg, derive_seed(seed, detail::kTagPermutation, 2), report, "power");
    report.add(detail::p_value_stat("power_driving_scale_p" + r, et_scale));
    ps_scale.push_back(et_scale.p_value);

    if (rep == 0) {
      const auto fa = flatten_batch(A);
      const auto fb = flatten_batch(B);
      double min_p = 1.0;
      for (std::size_t k = 0; k < fa.front().size(); ++k) {
        std::vector<double> ca, cb;
        for (const auto& v : fa) ca.push_back(v[k]);
        for (const auto& v : fb) cb.push_back(v[k]);
        const auto ks = ks_two_sample(ca, cb);
        Statistic s;
        s.name = "ks_p[coord " + std::to_string(k) + "]";
        s.value = ks.p_value;
        s.samples = cfg.n;
        report.add(s);
        min_p = std::min(min_p, ks.p_value);
      }
      Statistic s;
      s.name = "ks_min_p_bonferroni";
      s.value = std::min(1.0, min_p * static_cast<double>(fa.front().size()));
      s.samples = cfg.n;
      report.add(s);
    }
  }
  detail::majority_check(report, "energy_p_majority", ps, th.p_min, th.min_passing);
  detail::power_check(report, "power_drift", ps_drift, th.power_p_max, th.min_passing);
  detail::power_check(report, "power_driving_scale", ps_scale, th.power_p_max, th.min_passing);
  return report;
}

/// Pairwise energy tests among mu_r batches (t0 = 1).
inline ExperimentReport mu_r_experiment(const ExperimentConfig& cfg,
                                        std::vector<double> rs = {0.0, 0.25, 0.5, 0.75, 1.0}) {
  detail::require_simple(cfg);
  if (rs.size() < 2) throw ConfigError("mu-r needs at least two values of r");
  auto report = detail::start_report("mu-r", cfg);
  for (std::size_t i = 0; i < rs.size(); ++i) report.params.emplace_back("r" + std::to_string(i), rs[i]);
  const auto& p = cfg.params;
  const auto& th = cfg.thresholds;
  const TestSet ts = TestSet::for_params(p);
  std::vector<std::vector<std::vector<double>>> ps(rs.size(), std::vector<std::vector<double>>(rs.size()));
  std::vector<double> ps_power;
  Corruption scaled;
  scaled.driving_scale = th.driving_corruption;
  for (int rep = 0; rep < th.replicates; ++rep) {
    const auto seed = detail::replicate_seed(cfg, detail::kTagMuR, rep);
    report.samples.replicate_seeds.push_back(seed);
    std::vector<std::vector<MapSample>> batches;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      batches.push_back(mu_r_batch(p, cfg.x, rs[i], cfg.dt, cfg.n, seed, 10 + i, ts, cfg.threads));
    }
    const auto bad =
        musharp_batch(p, 0.0, cfg.x, 1.0, cfg.dt, cfg.n, seed, 1, ts, cfg.threads, scaled);
    const auto et_power = detail::energy(batches.front(), bad, cfg,
                                         derive_seed(seed, detail::kTagPermutation, 1), report, "power");
    report.add(detail::p_value_stat("power_driving_scale_p[" + std::to_string(rep) + "]", et_power));
    ps_power.push_back(et_power.p_value);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      for (std::size_t j = i + 1; j < rs.size(); ++j) {
        const auto label = "r=" + detail::fmt(rs[i]) + " vs r=" + detail::fmt(rs[j]);
        const auto et = detail::energy(batches[i], batches[j], cfg,
                                       derive_seed(seed, detail::kTagPermutation, 100 * (i + 1) + j),
                                       report, label);
        report.add(detail::p_value_stat("energy_p[" + label + "][" + std::to_string(rep) + "]", et));
        ps[i][j].push_back(et.p_value);
      }
    }
  }
  for (std::size_t i = 0; i < rs.size(); ++i)
    for (std::size_t j = i + 1; j < rs.size(); ++j)
      detail::majority_check(report, "energy_p_majority[r=" + detail::fmt(rs[i]) + " vs r=" +
                                         detail::fmt(rs[j]) + "]",
                             ps[i][j], th.p_min, th.min_passing);

  detail::power_check(report, "power_driving_scale", ps_power, th.power_p_max, th.min_passing);
  return report;
}

/// Coupled (mu_r, mu_s) with r = 1/2 - eps/2, s = 1/2 + eps/2.
inline ExperimentReport coupling_experiment(const ExperimentConfig& cfg,
                                            std::vector<double> eps_list = {0.2, 0.1, 0.05, 0.025}) {
  detail::require_simple(cfg);
  if (eps_list.size() < 2) throw ConfigError("coupling needs at least two values of eps");
  std::sort(eps_list.begin(), eps_list.end(), std::greater<>());
  auto report = detail::start_report("coupling", cfg);
  for (std::size_t i = 0; i < eps_list.size(); ++i)
    report.params.emplace_back("eps" + std::to_string(i), eps_list[i]);
  const auto& p = cfg.params;
  const auto& th = cfg.thresholds;
  const TestSet ts = TestSet::for_params(p);

  std::vector<double> c_eps, c_eps_se, exceed, exceed_se;
  std::vector<std::size_t> exceed_hits;
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    const double eps = eps_list[k];
    const double r = 0.5 - eps / 2.0;
    const double s = 0.5 + eps / 2.0;
    const auto seed = detail::replicate_seed(cfg, detail::kTagCoupling, static_cast<int>(k));
    report.samples.replicate_seeds.push_back(seed);
    std::vector<double> dist(cfg.n), gap(cfg.n);
    parallel_for(cfg.n, cfg.threads, [&](std::size_t i) {
      const auto pair = coupled_pair(p, cfg.x, r, s, cfg.dt, derive_seed(seed, 1, i), ts);
      dist[i] = sup_distance(pair.mu_r, pair.mu_s);
      gap[i] = pair.endpoint_gap;
    });
    const std::string tag = "[eps=" + detail::fmt(eps) + "]";
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(cfg.n);
    auto quantile = [&](double q) {
      return sorted[std::min(sorted.size() - 1, static_cast<std::size_t>(q * (n - 1.0) + 0.5))];
    };
    // Bootstrap standard error of the maximum.
    std::mt19937_64 rng(derive_seed(seed, detail::kTagBootstrap));
    std::uniform_int_distribution<std::size_t> pick(0, cfg.n - 1);
    std::vector<double> boot;
    for (int bsample = 0; bsample < 200; ++bsample) {
      double m = 0.0;
      for (std::size_t i = 0; i < cfg.n; ++i) m = std::max(m, dist[pick(rng)]);
      boot.push_back(m / eps);
    }
    auto boot_est = mean_with_error(boot);
    const double boot_sd = boot_est.std_error * std::sqrt(static_cast<double>(boot.size()));

    Statistic mx{"max_distance" + tag, sorted.back()};
    mx.samples = cfg.n;
    report.add(mx);
    for (double q : {0.5, 0.9, 0.99}) {
      Statistic qs{"quantile_" + detail::fmt(q) + tag, quantile(q)};
      qs.samples = cfg.n;
      report.add(qs);
    }
    Statistic c{"c" + tag, sorted.back() / eps, boot_sd};
    c.samples = cfg.n;
    c.fitted = true;
    report.add(c);
    c_eps.push_back(c.value);
    c_eps_se.push_back(c.std_error);

    const double level = std::pow(eps, 1.25);
    const auto hits = static_cast<std::size_t>(
        std::count_if(dist.begin(), dist.end(), [&](double d) { return d >= level; }));
    const double pe = hits / n;
    Statistic ex{"exceedance" + tag, pe, std::sqrt(pe * (1.0 - pe) / n)};
    ex.samples = cfg.n;
    report.add(ex);
    exceed.push_back(pe);
    exceed_se.push_back(ex.std_error);
    exceed_hits.push_back(hits);

    const double gap_level = std::sqrt(eps) * std::log(1.0 / eps);
    const double gv = static_cast<double>(std::count_if(gap.begin(), gap.end(),
                                                        [&](double g) { return g > gap_level; })) / n;
    Statistic gs{"gap_violation_frequency" + tag, gv, std::sqrt(gv * (1.0 - gv) / n)};
    gs.samples = cfg.n;
    report.add(gs);
  }

  const double c_ref = c_eps.front();
  const auto c_arg = std::max_element(c_eps.begin(), c_eps.end()) - c_eps.begin();
  const double c_max = c_eps[c_arg];
  Statistic cf{"c_fitted", c_max, c_eps_se[c_arg]};
  cf.samples = cfg.n * eps_list.size();
  report.add(cf);
  bool stable = std::isfinite(c_max);
  for (double c : c_eps) stable = stable && c <= th.stability_ratio * c_ref;
  report.check("c_stable", stable,
               "max distance <= c eps with c = " + detail::fmt(c_max) + "; c_eps <= " +
                   detail::fmt(th.stability_ratio) + " x c at eps = " + detail::fmt(eps_list.front()));

  bool decreasing = true;
  for (std::size_t k = 1; k < exceed.size(); ++k) decreasing = decreasing && exceed[k] < exceed[k - 1];
  std::vector<std::vector<double>> X;
  std::vector<double> y, var;
  for (std::size_t k = 0; k < exceed.size(); ++k) {
    if (exceed_hits[k] == 0) continue;
    X.push_back({1.0, std::log(1.0 / eps_list[k])});
    y.push_back(std::log(exceed[k]));
    var.push_back((1.0 - exceed[k]) / (static_cast<double>(cfg.n) * exceed[k]));
  }
  std::string detail_text;
  bool slope_ok = false;
  if (X.size() >= 3) {
    const auto fit = weighted_least_squares(X, y, var);
    Statistic sl{"exceedance_loglog_slope", fit.coef[1], fit.std_error[1]};
    sl.samples = cfg.n;
    sl.fitted = true;
    report.add(sl);
    // Super-linear decay: slope against log(1/eps) below -1 over the whole
    // interval.
    slope_ok = fit.coef[1] + kZ95 * fit.std_error[1] < -1.0;
    detail_text = "slope = " + detail::fmt(fit.coef[1]) + " +- " + detail::fmt(fit.std_error[1]);
  } else {
    detail_text = "only " + std::to_string(X.size()) +
                  " eps values with any exceedance; the decay exponent cannot be fitted";
  }
  std::string seq;
  for (std::size_t k = 0; k < exceed.size(); ++k)
    seq += (k ? ", " : "") + std::to_string(exceed_hits[k]) + "/" + std::to_string(cfg.n);
  report.check("exceedance_superlinear_decay", decreasing && slope_ok,
               "exceedance counts " + seq + (decreasing ? " strictly decreasing; " : " not strictly decreasing; ") +
                   detail_text);
  return report;
}

/// Tail experiments on bridges from x0 sqrt(t0) to 0 at t0.
/// The batch size is ten times the configured N.
inline ExperimentReport tails_experiment(const ExperimentConfig& cfg) {
  const auto& p = cfg.params;
  if (!(p.a > 0.25)) throw ConfigError("tails requires a > 1/4 (kappa < 8)");
  auto report = detail::start_report("tails", cfg);
  const std::size_t n = 10 * cfg.n;
  report.samples.n = n;
  const double x0 = cfg.x;
  const double t0 = cfg.t0;
  const double rt = std::sqrt(t0);
  const std::vector<double> eps_list = {0.4, 0.2, 0.1, 0.05, 0.025, 0.0125};
  BridgeOptions opts;
  for (double e : eps_list) opts.landmarks.push_back(t0 * (1.0 - e));
  std::sort(opts.landmarks.begin(), opts.landmarks.end());

  std::vector<double> max_excess(n), integral(n), driving_max(n);
  std::vector<std::vector<double>> near_end(eps_list.size(), std::vector<double>(n));
  const auto seed = detail::replicate_seed(cfg, detail::kTagTails, 0);
  report.samples.replicate_seeds.push_back(seed);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    BrownianPath noise(derive_seed(seed, 1, i));
    const auto b = sample_bridge(p, x0 * rt, t0, cfg.dt, noise, opts);
    double mx = 0.0;
    double mu = 0.0;
    std::size_t next = 0;
    for (std::size_t k = 0; k < b.size(); ++k) {
      mx = std::max(mx, b.values[k]);
      // Driving from x1 = 0 to x2 = x0 sqrt(t0): U - x1 = x2 + I - X.
      mu = std::max(mu, std::abs(x0 * rt + b.drift_integral[k] - b.values[k]));
      // Ascending landmarks match eps_list in order.
      while (next < opts.landmarks.size() && b.times[k] == opts.landmarks[next]) {
        near_end[next][i] = b.values[k];
        ++next;
      }
    }
    max_excess[i] = mx / rt - x0;
    integral[i] = b.drift_integral.back() / p.a / rt;
    driving_max[i] = mu / rt;
  });

  auto add_fit = [&](const std::string& name, const LogSurvivalFit& f, std::size_t coef) {
    Statistic s{name, f.fit.coef[coef], f.fit.std_error[coef]};
    s.samples = n;
    s.fitted = true;
    report.add(s);
    return s;
  };
  auto grid = [](double lo, double hi, double step) {
    std::vector<double> g;
    for (double v = lo; v <= hi + 1e-9; v += step) g.push_back(v);
    return g;
  };

  // (i) max X / sqrt(t0) - x0 >= r, log-survival against r^2.
  {
    auto rs = grid(0.1, 2.5, 0.1);
    std::vector<double> cov;
    for (double r : rs) cov.push_back(r * r);
    const auto curve = survival_curve(max_excess, rs);
    const auto fit = fit_log_survival(curve, cov, n);
    const auto s = add_fit("max_slope_vs_r2", fit, 1);
    const double upper = s.value + kZ95 * s.std_error;
    report.check("max_gaussian_tail", upper <= cfg.thresholds.gaussian_tail_slope,
                 "slope " + detail::fmt(s.value) + ", 95% upper " + detail::fmt(upper) + " <= " +
                     detail::fmt(cfg.thresholds.gaussian_tail_slope));
    double c_bound = 0.0;
    for (std::size_t k = 0; k < rs.size(); ++k)
      c_bound = std::max(c_bound, curve[k].survival * std::exp(rs[k] * rs[k] / 4.0));
    Statistic cb{"max_bound_constant", c_bound};
    cb.samples = n;
    report.add(cb);
    const auto at_zero = survival_curve(max_excess, std::vector<double>{0.0}).front();
    Statistic z{"max_survival_at_zero", at_zero.survival, at_zero.std_error};
    z.samples = n;
    report.add(z);
    report.check("max_survival_at_zero", at_zero.survival == 1.0,
                 "P(max >= x0) = " + detail::fmt(at_zero.survival));
  }
  // (ii) int_0^t0 ds / X >= r sqrt(t0), log-survival linear in r.
  {
    auto rs = grid(1.0, 6.0, 0.25);
    const auto curve = survival_curve(integral, rs);
    const auto fit = fit_log_survival(curve, rs, n);
    const auto s = add_fit("integral_slope", fit, 1);
    const double upper = s.value + kZ95 * s.std_error;
    report.check("integral_exponential_tail", upper < 0.0,
                 "slope " + detail::fmt(s.value) + ", 95% upper " + detail::fmt(upper) + " < 0");
  }
  // (iii) P(X_{t0(1-eps)} >= sqrt(eps t0) log(1/eps)) against L = log(1/eps):
  // a negative quadratic coefficient means decay faster than every power.
  {
    std::vector<SurvivalPoint> curve;
    std::vector<double> cov;
    for (std::size_t j = 0; j < eps_list.size(); ++j) {
      const double L = std::log(1.0 / eps_list[j]);
      std::vector<double> scaled(n);
      for (std::size_t i = 0; i < n; ++i) scaled[i] = near_end[j][i] / std::sqrt(eps_list[j] * t0);
      curve.push_back(survival_curve(scaled, std::vector<double>{L}).front());
      cov.push_back(L);
      Statistic sp{"endpoint_survival[eps=" + detail::fmt(eps_list[j]) + "]", curve.back().survival,
                   curve.back().std_error};
      sp.samples = n;
      report.add(sp);
    }
    const auto fit = fit_log_survival(curve, cov, n, true);
    const auto s = add_fit("endpoint_quadratic_coefficient", fit, 2);
    const double upper = s.value + kZ95 * s.std_error;
    report.check("endpoint_superpolynomial", upper < 0.0,
                 "coefficient of log(1/eps)^2: " + detail::fmt(s.value) + ", 95% upper " +
                     detail::fmt(upper) + " < 0");
  }
  // (iv) max |U - x1| >= sqrt(t0)(|x2 - x1| + r^2), log-survival linear in r.
  {
    auto rs = grid(0.5, 2.0, 0.1);
    std::vector<double> levels;
    for (double r : rs) levels.push_back(x0 + r * r);
    const auto curve = survival_curve(driving_max, levels);
    const auto fit = fit_log_survival(curve, rs, n);
    const auto s = add_fit("driving_slope", fit, 1);
    const double upper = s.value + kZ95 * s.std_error;
    report.check("driving_exponential_tail", upper < 0.0,
                 "slope " + detail::fmt(s.value) + ", 95% upper " + detail::fmt(upper) + " < 0");
  }
  return report;
}

/// Two curves of capacities a*r1 and a*r2 grown from both ends of
/// mu#(x1, x2; 1) in either order, compared by the energy test; plus the
/// reweighting of independent SLE paths to infinity.
inline ExperimentReport commutation_experiment(const ExperimentConfig& cfg, double x1 = 0.0,
                                               double x2 = 1.0, double r1 = 0.2, double r2 = 0.2) {
  if (!is_zero_charge_kappa(cfg.params.kappa)) {
    throw ConfigError("commutation requires kappa = 8/3 (got " + detail::fmt(cfg.params.kappa) + ")");
  }
  if (!(r1 > 0.0 && r2 > 0.0 && r1 + r2 < 1.0)) throw ConfigError("commutation needs r1, r2 > 0, r1 + r2 < 1");
  auto report = detail::start_report("commutation", cfg);
  report.params.insert(report.params.end(), {{"x1", x1}, {"x2", x2}, {"r1", r1}, {"r2", r2}});
  const auto& p = cfg.params;
  const auto& th = cfg.thresholds;
  const TestSet ts = TestSet::for_params(p);

  Statistic cc{"central_charge", p.central_charge};
  report.add(cc);

  std::vector<double> ps;
  for (int rep = 0; rep < th.replicates; ++rep) {
    const auto seed = detail::replicate_seed(cfg, detail::kTagCommutation, rep);
    report.samples.replicate_seeds.push_back(seed);
    std::vector<std::vector<double>> one(cfg.n), two(cfg.n);
    parallel_for(cfg.n, cfg.threads, [&](std::size_t i) {
      one[i] = flatten(sample_ordered_pair(p, x1, x2, r1, r2, cfg.dt, derive_seed(seed, 1, i), ts, true));
      two[i] = flatten(sample_ordered_pair(p, x1, x2, r1, r2, cfg.dt, derive_seed(seed, 2, i), ts, false));
    });
    const auto et = energy_two_sample_test(one, two, th.permutations,
                                           derive_seed(seed, detail::kTagPermutation));
    if (et.degenerate) report.warnings.push_back("commutation: degenerate batches");
    report.add(detail::p_value_stat("energy_p[" + std::to_string(rep) + "]", et));
    ps.push_back(et.p_value);
  }
  detail::majority_check(report, "energy_p_majority", ps, th.p_min, th.min_passing_commutation);

  // Weights on the independent base measure.
  const auto wseed = derive_seed(cfg.seed, detail::kTagCommutationWeights);
  std::vector<IndependentPair> pairs(cfg.n);
  parallel_for(cfg.n, cfg.threads, [&](std::size_t i) {
    pairs[i] = independent_pair_weight(p, x1, x2, r1, r2, cfg.dt, derive_seed(wseed, 1, i), ts);
  });
  const double x_gap = std::abs(x2 - x1);
  std::vector<double> weights, rel_gap, rel_phi, rel_weight;
  std::size_t disjoint = 0;
  bool positive = true;
  for (const auto& ip : pairs) {
    const double w1 = ip.first_view.assembled(p.b, x_gap);
    const double w2 = ip.second_view.assembled(p.b, x_gap);
    weights.push_back(w1);
    if (!ip.first_view.disjoint) continue;
    ++disjoint;
    positive = positive && w1 > 0.0 && w2 > 0.0 && ip.first_view.h1_prime_at_U2 > 0.0 &&
               ip.first_view.h2_prime_at_U1 > 0.0 && ip.first_view.phi_ratio > 0.0;
    auto rel = [](double u, double v) { return std::abs(u - v) / std::max(std::abs(u), std::abs(v)); };
    rel_gap.push_back(rel(ip.first_view.endpoint_gap, ip.second_view.endpoint_gap));
    rel_phi.push_back(rel(ip.first_view.phi_ratio, ip.second_view.phi_ratio));
    rel_weight.push_back(rel(w1, w2));
  }
  const auto mw = mean_with_error(weights);
  report.add(detail::mean_stat("mean_weight", mw, true));
  const double frac = static_cast<double>(disjoint) / static_cast<double>(cfg.n);
  Statistic fd{"disjoint_fraction", frac, std::sqrt(frac * (1.0 - frac) / cfg.n)};
  fd.samples = cfg.n;
  report.add(fd);
  report.check("weights_positive", positive && disjoint > 0,
               std::to_string(disjoint) + " disjoint pairs, all factors positive: " +
                   (positive ? "yes" : "no"));
  auto median = [](std::vector<double> v) {
    if (v.empty()) return kNaN;
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  bool agree = true;
  std::string agree_detail;
  for (auto [name, v] : {std::pair{"gap", &rel_gap}, std::pair{"phi", &rel_phi}, std::pair{"weight", &rel_weight}}) {
    const double m = median(*v);
    Statistic s{std::string("view_median_relative_difference[") + name + "]", m};
    s.samples = v->size();
    report.add(s);
    agree = agree && m < th.view_agreement;
    agree_detail += std::string(agree_detail.empty() ? "" : ", ") + name + " " + detail::fmt(m);
  }
  report.check("views_agree", agree,
               "median relative differences " + agree_detail + " < " + detail::fmt(th.view_agreement));
  report.check("mean_weight_one", std::abs(mw.mean - 1.0) <= 3.0 * mw.std_error,
               "E[W] = " + detail::fmt(mw.mean) + " +- " + detail::fmt(mw.std_error));
  return report;
}

/// Quadrature residuals for the first-passage density, the killed transition
/// density and the bridge density.
inline ExperimentReport density_check(const ExperimentConfig& cfg, double tolerance = 1e-5) {
  const auto& p = cfg.params;
  if (!(p.a > 0.25)) throw ConfigError("density-check requires a > 1/4 (kappa < 8)");
  auto report = detail::start_report("density-check", cfg);
  report.samples.n = 0;
  using boost::math::quadrature::exp_sinh;
  using boost::math::quadrature::gauss_kronrod;
  auto half_line = [](const std::function<double(double)>& f, double cut) {
    exp_sinh<double> tail;
    return gauss_kronrod<double, 61>::integrate(f, 0.0, cut, 12, 1e-12) +
           tail.integrate([&](double u) { return f(cut + u); }, 1e-13);
  };
  const double x = cfg.x;
  const double t0 = cfg.t0;
  auto residual = [&](const std::string& name, double value) {
    Statistic s{name, value};
    report.add(s);
    report.check(name, std::abs(value) < tolerance, "|residual| = " + detail::fmt(std::abs(value)) +
                                                        " < " + detail::fmt(tolerance));
  };
  // phi(x, .) is a probability density in time.
  const double phi_mass = half_line(
      [&](double t) { return t > 0.0 ? first_passage_density(p, x, t, true) : 0.0; }, 4.0 * x * x);
  residual("phi_normalization", phi_mass - 1.0);
  // Killed transition density: mass at time t equals P(T > t).
  for (double t : {0.25 * t0, t0}) {
    const double mass = half_line(
        [&](double y) { return y > 0.0 ? transition_density_killed(p, t, x, y) : 0.0; },
        x + 12.0 * std::sqrt(t));
    residual("q_mass[t=" + detail::fmt(t) + "]", mass - (1.0 - first_passage_cdf(p, x, t)));
  }
  // Bridge marginal at t0/2 integrates to one.
  const double bridge_mass = half_line(
      [&](double y) { return y > 0.0 ? bridge_density(p, 0.5 * t0, x, y, t0) : 0.0; },
      x + 12.0 * std::sqrt(t0));
  residual("bridge_mass", bridge_mass - 1.0);
  return report;
}

/// Draws a batch from mu#(0, x; t0) and checks it for bookkeeping errors.
inline ExperimentReport sample_experiment(const ExperimentConfig& cfg, std::vector<MapSample>& batch) {
  auto report = detail::start_report("sample", cfg);
  const auto& p = cfg.params;
  const TestSet ts = TestSet::for_params(p);
  const auto seed = detail::replicate_seed(cfg, detail::kTagSample, 0);
  report.samples.replicate_seeds.push_back(seed);
  batch = musharp_batch(p, 0.0, cfg.x, cfg.t0, cfg.dt, cfg.n, seed, 1, ts, cfg.threads);
  bool upper = true;
  std::vector<double> re, im;
  for (const auto& s : batch) {
    for (const auto& z : s.values) upper = upper && std::isfinite(z.real()) && z.imag() > 0.0;
    re.push_back(s.values.front().real());
    im.push_back(s.values.front().imag());
  }
  report.add(detail::mean_stat("center_image_re", mean_with_error(re)));
  report.add(detail::mean_stat("center_image_im", mean_with_error(im)));
  report.check("images_in_upper_half_plane", upper, "all test-set images finite with Im > 0");
  return report;
}

/// Runs an experiment at dt and dt/2 with the same seeds. Verdicts of all
/// checks and of every permutation p-value must agree, and every fitted
/// constant must move by less than its standard error.
struct DiscretizationComparison {
  ExperimentReport coarse;
  ExperimentReport fine;
  std::vector<Check> checks;

  bool verdict() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

inline DiscretizationComparison compare_discretizations(
    const ExperimentConfig& cfg, const std::function<ExperimentReport(const ExperimentConfig&)>& run,
    std::optional<ExperimentReport> coarse = std::nullopt) {
  DiscretizationComparison out;
  out.coarse = coarse ? std::move(*coarse) : run(cfg);
  ExperimentConfig half = cfg;
  half.dt = cfg.dt / 2.0;
  out.fine = run(half);
  for (const auto& c : out.coarse.checks) {
    const Check* f = out.fine.find_check(c.name);
    Check k;
    k.name = "verdict_unchanged[" + c.name + "]";
    k.passed = f != nullptr && f->passed == c.passed;
    k.detail = std::string("dt: ") + (c.passed ? "pass" : "fail") + ", dt/2: " +
               (f ? (f->passed ? "pass" : "fail") : "missing");
    out.checks.push_back(k);
  }
  // Each permutation p-value passes or fails on its own threshold.
  int compared = 0;
  std::string flipped;
  for (const auto& s : out.coarse.statistics) {
    if (s.permutations == 0) continue;
    const Statistic* f = out.fine.find(s.name);
    const double threshold = s.name.rfind("power_", 0) == 0 ? cfg.thresholds.power_p_max
                                                            : cfg.thresholds.p_min;
    ++compared;
    if (f == nullptr || (s.value > threshold) != (f->value > threshold)) {
      flipped += (flipped.empty() ? "" : ", ") + s.name;
    }
  }
  if (compared > 0) {
    out.checks.push_back({"p_value_verdicts_unchanged", flipped.empty(),
                          std::to_string(compared) + " p-values compared" +
                              (flipped.empty() ? "" : "; changed: " + flipped)});
  }
  for (const auto& s : out.coarse.statistics) {
    if (!s.fitted) continue;
    const Statistic* f = out.fine.find(s.name);
    Check k;
    k.name = "fitted_stable[" + s.name + "]";
    if (f == nullptr) {
      k.detail = "missing at dt/2";
    } else {
      const double se = std::max(s.std_error, f->std_error);
      const double diff = std::abs(s.value - f->value);
      k.passed = diff < se;
      k.detail = "dt: " + detail::fmt(s.value) + ", dt/2: " + detail::fmt(f->value) + ", |diff| " +
                 detail::fmt(diff) + " < se " + detail::fmt(se);
    }
    out.checks.push_back(k);
  }
  return out;
}

}  // namespace slerev
