#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "slerev/bessel.hpp"
#include "slerev/stats.hpp"
#include "support.hpp"

using namespace slerev;
using Catch::Approx;
using slerev::testing::integrate;
using slerev::testing::integrate_half_line;

namespace {

constexpr double kPi = std::numbers::pi;

double levy_density(double x, double t) {
  return x * std::pow(t, -1.5) * std::exp(-x * x / (2.0 * t)) / std::sqrt(2.0 * kPi);
}

double heat_kernel(double d, double t) {
  return std::exp(-d * d / (2.0 * t)) / std::sqrt(2.0 * kPi * t);
}

Params with_a(double a) { return Params::from_kappa(2.0 / a); }

}  // namespace

TEST_CASE("params are pure functions of kappa") {
  for (double kappa : {1.0, 2.0, 8.0 / 3.0, 3.0, 4.0, 6.0}) {
    const Params p = Params::from_kappa(kappa);
    CHECK(p.a == Params::rate_of(kappa));
    CHECK(p.b == (3.0 * p.a - 1.0) / 2.0);
    CHECK(p.central_charge == (6.0 - kappa) * (3.0 * kappa - 8.0) / (2.0 * kappa));
    CHECK(p.a > 0.25);
  }
  CHECK(Params::from_kappa(kKappaZeroCharge).central_charge == Approx(0.0).margin(1e-15));
  CHECK(Params::from_kappa(8.0 / 3.0).b == Approx(5.0 / 8.0));
  CHECK_THROWS_AS(Params::from_kappa(0.0), DomainError);
  CHECK_THROWS_AS(Params::from_kappa(8.0), DomainError);
}

TEST_CASE("hitting density at a = 1/2 is the Levy density") {
  const Params p = with_a(0.5);
  CHECK(first_passage_density(p, 1.0, 1.0, true) ==
        Approx(std::exp(-0.5) / std::sqrt(2.0 * kPi)).epsilon(1e-12));
  for (double x : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    for (double t : {0.01, 0.2, 1.0, 3.0, 40.0}) {
      CHECK(std::abs(first_passage_density(p, x, t, true) - levy_density(x, t)) < 1e-8);
      CHECK(std::abs(first_passage_cdf(p, x, t) - std::erfc(x / std::sqrt(2.0 * t))) < 1e-8);
    }
  }
}

TEST_CASE("normalized hitting density integrates to one") {
  for (double a : {0.5, 0.6, 0.75, 1.0}) {
    const Params p = with_a(a);
    for (double x : {0.4, 1.0, 1.7}) {
      const double mass = integrate_half_line(
          [&](double t) { return t > 0.0 ? first_passage_density(p, x, t, true) : 0.0; }, x * x,
          x * x);
      CHECK(std::abs(mass - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("hitting cdf agrees with the integrated density") {
  for (double a : {0.55, 0.75, 1.0}) {
    const Params p = with_a(a);
    for (double t : {0.2, 1.0, 4.0}) {
      const double quad = integrate(
          [&](double s) { return s > 0.0 ? first_passage_density(p, 1.2, s, true) : 0.0; }, 0.0, t);
      CHECK(std::abs(quad - first_passage_cdf(p, 1.2, t)) < 1e-9);
    }
  }
}

TEST_CASE("hitting density scaling") {
  const Params p = with_a(0.7);
  for (double x : {0.3, 2.0}) {
    for (double t : {0.5, 2.0}) {
      CHECK(first_passage_density(p, x, t, true) ==
            Approx(first_passage_density(p, 1.0, t / (x * x), true) / (x * x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("density domain errors") {
  const Params p = with_a(0.5);
  CHECK_THROWS_AS(first_passage_density(p, 0.0, 1.0, true), DomainError);
  CHECK_THROWS_AS(first_passage_density(p, 1.0, -1.0, false), DomainError);
  CHECK_THROWS_AS(transition_density_killed(p, 1.0, -1.0, 1.0), DomainError);
  CHECK_THROWS_AS(bridge_density(p, 1.0, 1.0, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(bridge_density(p, 0.0, 1.0, 1.0, 1.0), DomainError);
  Params weak = p;
  weak.a = 0.25;
  CHECK_THROWS_AS(first_passage_normalizer(weak), DomainError);
  CHECK_THROWS_AS(first_passage_density(weak, 1.0, 1.0, true), DomainError);
  CHECK_NOTHROW(first_passage_density(weak, 1.0, 1.0, false));
}

TEST_CASE("killed transition density at a = 1/2 is the reflected heat kernel") {
  const Params p = with_a(0.5);
  CHECK(transition_density_killed(p, 1.0, 1.0, 1.0) ==
        Approx((1.0 - std::exp(-2.0)) / std::sqrt(2.0 * kPi)).epsilon(1e-12));
  for (double t : {0.05, 0.5, 2.0}) {
    for (double x : {0.1, 1.0, 3.0}) {
      for (double y : {0.05, 0.9, 2.5}) {
        const double expected = heat_kernel(y - x, t) - heat_kernel(y + x, t);
        CHECK(std::abs(transition_density_killed(p, t, x, y) - expected) < 1e-8);
      }
    }
  }
}

TEST_CASE("killed density conserves mass with the absorbed part") {
  for (double a : {0.55, 0.6, 0.75, 1.0}) {
    const Params p = with_a(a);
    for (double x : {0.5, 1.0}) {
      for (double t : {0.3, 1.0}) {
        const double alive = integrate_half_line(
            [&](double y) { return y > 0.0 ? transition_density_killed(p, t, x, y) : 0.0; }, x,
            std::sqrt(t));
        const double dead = integrate(
            [&](double s) { return s > 0.0 ? first_passage_density(p, x, s, true) : 0.0; }, 0.0, t);
        CHECK(std::abs(alive + dead - 1.0) < 1e-5);
      }
    }
  }
}

TEST_CASE("killed density satisfies Chapman-Kolmogorov") {
  for (double a : {0.55, 0.75}) {
    const Params p = with_a(a);
    const double t = 0.8;
    const double s = t / 2.0;
    for (double x : {0.6, 1.2}) {
      for (double y : {0.3, 1.0, 1.9}) {
        const double composed = integrate_half_line(
            [&](double z) {
              if (!(z > 0.0)) return 0.0;
              return transition_density_killed(p, s, x, z) * transition_density_killed(p, t - s, z, y);
            },
            0.5 * (x + y), std::sqrt(t));
        CHECK(composed == Approx(transition_density_killed(p, t, x, y)).epsilon(1e-7));
      }
    }
  }
}

TEST_CASE("killed density is finite for large xy/t") {
  const Params p = with_a(0.6);
  const double v = transition_density_killed(p, 1e-3, 50.0, 50.0);
  CHECK(std::isfinite(v));
  CHECK(v == Approx(1.0 / std::sqrt(2.0 * kPi * 1e-3)).epsilon(1e-5));
  const double nu = killed_bessel_index(p);
  CHECK(scaled_bessel_i(nu, 599.999) == Approx(scaled_bessel_i(nu, 600.001)).epsilon(1e-5));
  CHECK(scaled_bessel_i(0.0, 0.0) == 1.0);
  CHECK(scaled_bessel_i(0.7, 0.0) == 0.0);
}

TEST_CASE("densities are nonnegative") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-6.0, 3.0);
  for (int i = 0; i < 2000; ++i) {
    const Params p = with_a(0.3 + 0.9 * std::exp(u(rng)) / (1.0 + std::exp(u(rng))));
    const double x = std::exp(u(rng));
    const double y = std::exp(u(rng));
    const double t = std::exp(u(rng));
    CHECK(transition_density_killed(p, t, x, y) >= 0.0);
    CHECK(first_passage_density(p, x, t, true) >= 0.0);
    CHECK(bridge_density(p, t, x, y, 2.0 * t) >= 0.0);
  }
}

TEST_CASE("bridge density is a probability density") {
  struct Case { double a, x, t, t0; };
  for (const Case c : {Case{0.5, 1.0, 0.3, 1.0}, Case{0.75, 1.0, 0.5, 1.0}, Case{0.6, 0.4, 0.9, 2.0}}) {
    const Params p = with_a(c.a);
    const double mass = integrate_half_line(
        [&](double y) { return y > 0.0 ? bridge_density(p, c.t, c.x, y, c.t0) : 0.0; }, c.x,
        std::sqrt(c.t));
    CHECK(std::abs(mass - 1.0) < 1e-7);
  }
}

TEST_CASE("bridge density concentrates at the start for small t") {
  const Params p = with_a(0.5);
  double previous = kInf;
  for (double t : {0.1, 0.01, 0.001}) {
    const double width = 4.0 * std::sqrt(t);
    const double inside = integrate(
        [&](double y) { return y > 0.0 ? bridge_density(p, t, 1.0, y, 1.0) : 0.0; },
        std::max(1e-9, 1.0 - width), 1.0 + width);
    CHECK(inside > 0.99);
    CHECK(width < previous);
    previous = width;
  }
}

TEST_CASE("sample_bessel at a = 1/2 hits the origin with the Levy law") {
  const Params p = with_a(0.5);
  const double horizon = 4.0;
  const int n = 20000;
  std::vector<double> hits(n);
  for (int i = 0; i < n; ++i) {
    BrownianPath noise(derive_seed(101, 0, i));
    BesselOptions opts;
    opts.horizon = horizon;
    const auto path = sample_bessel(p, 1.0, 1e-3, noise, opts);
    hits[i] = path.hitting_time;
  }
  const double d = slerev::testing::censored_ks(
      hits, [&](double t) { return first_passage_cdf(p, 1.0, t); }, horizon);
  CHECK(d < 0.02);
}

TEST_CASE("sample_bessel hitting time for a != 1/2") {
  const Params p = with_a(0.8);
  const int n = 8000;
  std::vector<double> hits(n);
  for (int i = 0; i < n; ++i) {
    BrownianPath noise(derive_seed(102, 0, i));
    BesselOptions opts;
    opts.horizon = 5.0;
    hits[i] = sample_bessel(p, 1.0, 1e-3, noise, opts).hitting_time;
  }
  const double d = slerev::testing::censored_ks(
      hits, [&](double t) { return first_passage_cdf(p, 1.0, t); }, 5.0);
  CHECK(d < 1.63 / std::sqrt(n) + 0.01);
}

TEST_CASE("sample_bessel path invariants") {
  const Params p = with_a(0.6);
  BrownianPath noise(5);
  const auto path = sample_bessel(p, 1.5, 1e-3, noise);
  REQUIRE(path.size() > 2);
  CHECK(path.values.front() == 1.5);
  CHECK(path.values.back() == 0.0);
  CHECK(path.hitting_time == path.times.back());
  for (std::size_t k = 1; k < path.size(); ++k) {
    CHECK(path.times[k] > path.times[k - 1]);
    CHECK(path.drift_integral[k] >= path.drift_integral[k - 1]);
    if (k + 1 < path.size()) CHECK(path.values[k] > 0.0);
  }
}

TEST_CASE("sample_bessel is reproducible and scale covariant in law") {
  const Params p = with_a(0.75);
  BrownianPath n1(77), n2(77);
  const auto a = sample_bessel(p, 1.0, 1e-3, n1);
  const auto b = sample_bessel(p, 1.0, 1e-3, n2);
  CHECK(a.values == b.values);
  CHECK(a.times == b.times);

  // X/x0 at time t x0^2 started from x0 = 2 against X at time t from 1.
  const int n = 4000;
  std::vector<double> from_one, from_two;
  for (int i = 0; i < n; ++i) {
    BrownianPath u(derive_seed(103, 1, i));
    BrownianPath v(derive_seed(103, 2, i));
    BesselOptions o1;
    o1.horizon = 0.25;
    BesselOptions o2;
    o2.horizon = 1.0;
    const auto p1 = sample_bessel(p, 1.0, 1e-3, u, o1);
    const auto p2 = sample_bessel(p, 2.0, 1e-3, v, o2);
    from_one.push_back(p1.final_time() >= 0.25 ? p1.final_value() : 0.0);
    from_two.push_back(p2.final_time() >= 1.0 ? p2.final_value() / 2.0 : 0.0);
  }
  CHECK(ks_two_sample(from_one, from_two).p_value > 0.001);
}

TEST_CASE("bridge paths end at the origin at t0") {
  const Params p = with_a(0.5);
  int far = 0;
  const int n = 400;
  for (int i = 0; i < n; ++i) {
    BrownianPath noise(derive_seed(104, 0, i));
    const auto path = sample_bridge(p, 1.0, 1.0, 1e-3, noise);
    REQUIRE(path.size() > 3);
    CHECK(path.times.back() == 1.0);
    CHECK(path.values.back() == 0.0);
    CHECK(path.hitting_time == 1.0);
    for (std::size_t k = 0; k + 1 < path.size(); ++k) CHECK(path.values[k] > 0.0);
    for (std::size_t k = 1; k < path.size(); ++k) {
      CHECK(path.drift_integral[k] >= path.drift_integral[k - 1]);
    }
    const double delta = path.times.back() - path.times[path.size() - 2];
    if (path.values[path.size() - 2] > std::sqrt(delta) * std::log(1.0 / delta)) ++far;
  }
  CHECK(far <= n / 100);
}

TEST_CASE("bridge early stop lands exactly on the stop time") {
  const Params p = with_a(0.75);
  BrownianPath noise(9);
  BridgeOptions opts;
  opts.stop_time = 0.3;
  const auto path = sample_bridge(p, 1.0, 1.0, 1e-3, noise, opts);
  CHECK(path.times.back() == 0.3);
  CHECK(path.values.back() > 0.0);
  CHECK(path.hitting_time == kInf);

  BrownianPath again(9);
  const auto full = sample_bridge(p, 1.0, 1.0, 1e-3, again);
  // Same Brownian path, so the two runs agree up to the stop time.
  // The stopped run clips its last step to the stop time.
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    CHECK(full.times[k] == path.times[k]);
    CHECK(full.values[k] == path.values[k]);
  }
}

TEST_CASE("bridge step size diagnostic") {
  const Params p = with_a(0.5);
  BrownianPath noise(3);
  BridgeOptions opts;
  opts.max_halvings = 0;
  opts.drift_scale = -40.0;  // drives the path into the origin
  CHECK_THROWS_AS(sample_bridge(p, 1.0, 1.0, 1.0 / 64.0, noise, opts), StepSizeError);
}

TEST_CASE("bridge marginal matches the bridge density") {
  const Params p = with_a(0.5);
  const slerev::testing::TabulatedCdf cdf(
      [&](double y) { return y > 0.0 ? bridge_density(p, 0.5, 1.0, y, 1.0) : 0.0; }, 6.0, 3000);
  REQUIRE(std::abs(cdf.total() - 1.0) < 1e-8);
  const int n = 10000;
  std::vector<double> mid(n);
  for (int i = 0; i < n; ++i) {
    BrownianPath noise(derive_seed(105, 0, i));
    BridgeOptions opts;
    opts.stop_time = 0.5;
    mid[i] = sample_bridge(p, 1.0, 1.0, 1e-3, noise, opts).final_value();
  }
  CHECK(ks_statistic(mid, [&](double y) { return cdf(y); }) < 0.025);
}

TEST_CASE("weight trace formula") {
  const Params p = with_a(0.5);
  BesselPath path;
  path.times = {0.0, 0.1, 0.2};
  path.values = {1.0, 1.21, 0.64};
  path.drift_integral = {0.0, 0.0, 0.0};
  const std::vector<double> gprime = {1.0, 0.9, 0.8};
  const auto w = weight_trace(p, path, gprime, 1.0);
  REQUIRE(w.M.size() == 3);
  CHECK(w.M[0] == 1.0);
  CHECK(w.M[1] == Approx(std::pow(1.21, -0.5) * std::pow(0.9, 0.25)).epsilon(1e-14));
  CHECK(w.M[2] == Approx(std::pow(0.64, -0.5) * std::pow(0.8, 0.25)).epsilon(1e-14));
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(w.N[k] == first_passage_density(p, path.values[k], 1.0 - path.times[k], false));
    CHECK(w.M_tilde[k] == w.M[k] * w.N[k]);
  }
  const std::vector<double> bad = {0.9, 1.0, 1.0};
  CHECK_THROWS_AS(weight_trace(p, path, bad, 1.0), DomainError);
  path.values[1] = 0.0;
  CHECK_THROWS_AS(weight_trace(p, path, gprime, 1.0), DomainError);
}

TEST_CASE("weight trace drops the terminal bridge point") {
  const Params p = with_a(0.75);
  BrownianPath noise(21);
  const auto path = sample_bridge(p, 1.0, 1.0, 1e-3, noise);
  const auto gp = loewner_derivative_along(p, path);
  const auto w = weight_trace(p, path, gp, 1.0);
  CHECK(w.times.size() == path.size() - 1);
  CHECK(w.M[0] == 1.0);
}

namespace {

// Mean of f(weights at t ^ tau) over gap-process paths, tau the exit from
// [x0/2, 2 x0].
MeanEstimate stopped_mean(const Params& p, double t, double t0, bool gap_law, int n,
                          std::uint64_t seed, double dt,
                          double (*f)(const WeightTrace&, std::size_t)) {
  std::vector<double> values(n);
  for (int i = 0; i < n; ++i) {
    BrownianPath noise(derive_seed(seed, 0, i));
    BesselPath path;
    std::vector<double> gp;
    if (gap_law) {
      auto gap = sample_gap_process(p, 1.0, t, dt, noise, 0.5, 2.0);
      path = std::move(gap.path);
      gp = std::move(gap.gprime);
    } else {
      BesselOptions opts;
      opts.horizon = t;
      opts.exit_low = 0.5;
      opts.exit_high = 2.0;
      path = sample_bessel(p, 1.0, dt, noise, opts);
      gp = loewner_derivative_along(p, path);
    }
    const auto w = weight_trace(p, path, gp, t0);
    values[i] = f(w, w.times.size() - 1) / f(w, 0);
  }
  return mean_with_error(values);
}

double m_tilde(const WeightTrace& w, std::size_t k) { return w.M_tilde[k]; }
double m_plain(const WeightTrace& w, std::size_t k) { return w.M[k]; }
double m_inverse(const WeightTrace& w, std::size_t k) { return 1.0 / w.M[k]; }
double n_only(const WeightTrace& w, std::size_t k) { return w.N[k]; }

}  // namespace

TEST_CASE("stopped martingales have constant mean") {
  const Params p = with_a(0.5);
  for (double t : {0.25, 0.5}) {
    const auto mt = stopped_mean(p, t, 2.0, true, 4000, 106, 1e-3, m_tilde);
    CHECK(std::abs(mt.mean - 1.0) < 3.0 * mt.std_error);
    const auto m = stopped_mean(p, t, 2.0, true, 4000, 107, 1e-3, m_plain);
    CHECK(std::abs(m.mean - 1.0) < 3.0 * m.std_error);
    const auto mi = stopped_mean(p, t, 2.0, false, 4000, 108, 1e-3, m_inverse);
    CHECK(std::abs(mi.mean - 1.0) < 3.0 * mi.std_error);
    const auto n = stopped_mean(p, t, 2.0, false, 4000, 109, 1e-3, n_only);
    CHECK(std::abs(n.mean - 1.0) < 3.0 * n.std_error);
  }
}
