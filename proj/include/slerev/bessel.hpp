#pragma once

// Bessel-type processes dX = (1-2a)/X dt + dW killed at the origin, their
// hitting-time and transition densities, the bridge conditioned to hit the
// origin at a prescribed time, and the martingale weights that connect these
// laws to SLE from 0 to infinity.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "slerev/noise.hpp"
#include "slerev/params.hpp"

namespace slerev {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

inline void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string(name) + " must be positive and finite");
  }
}

}  // namespace detail

/// Index of the modified Bessel function in the killed transition density.
inline double killed_bessel_index(const Params& p) { return 2.0 * p.a - 0.5; }

/// exp(-z) I_nu(z) for nu >= 0, z >= 0, without overflow.
inline double scaled_bessel_i(double nu, double z) {
  if (z < 0.0) throw DomainError("scaled_bessel_i: negative argument");
  if (z == 0.0) return nu == 0.0 ? 1.0 : 0.0;
  if (z < 600.0) return boost::math::cyl_bessel_i(nu, z) * std::exp(-z);
  // Hankel asymptotic series; at z >= 600 it converges to double precision
  // long before the terms start to grow.
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (k * 8.0 * z);
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum / std::sqrt(2.0 * std::numbers::pi * z);
}

/// log(exp(-z) I_nu(z)), finite down to z = 0+.
inline double log_scaled_bessel_i(double nu, double z) {
  if (z < 1e-8 && nu > 0.0) return nu * std::log(0.5 * z) - std::lgamma(nu + 1.0) - z;
  return std::log(scaled_bessel_i(nu, z));
}

/// Normalizing constant of the hitting-time density: 2^(2a-1/2) Gamma(2a-1/2).
inline double first_passage_normalizer(const Params& p) {
  const double mu = 2.0 * p.a - 0.5;
  if (!(mu > 0.0)) throw DomainError("first-passage normalizer diverges for a <= 1/4");
  return std::pow(2.0, mu) * boost::math::tgamma(mu);
}

/// Hitting-time density of the origin started from x, evaluated at t.
/// Unnormalized: x^(4a-1) t^(-1/2-2a) exp(-x^2/2t).
inline double first_passage_density(const Params& p, double x, double t, bool normalized) {
  detail::require_positive(x, "x");
  detail::require_positive(t, "t");
  const double log_phi =
      (4.0 * p.a - 1.0) * std::log(x) - (0.5 + 2.0 * p.a) * std::log(t) - x * x / (2.0 * t);
  const double phi = std::exp(log_phi);
  return normalized ? phi / first_passage_normalizer(p) : phi;
}

/// P(T <= t) for the hitting time T started at x. T is distributed as
/// x^2 / (2G) with G ~ Gamma(2a - 1/2).
inline double first_passage_cdf(const Params& p, double x, double t) {
  detail::require_positive(x, "x");
  if (t <= 0.0) return 0.0;
  const double mu = 2.0 * p.a - 0.5;
  if (!(mu > 0.0)) throw DomainError("hitting time is not a.s. finite for a <= 1/4");
  return boost::math::gamma_q(mu, x * x / (2.0 * t));
}

/// log q_t(x, y) for the process killed at the origin.
inline double log_transition_density_killed(const Params& p, double t, double x, double y) {
  detail::require_positive(t, "t");
  detail::require_positive(x, "x");
  detail::require_positive(y, "y");
  const double d = x - y;
  return std::log(y / t) + (0.5 - 2.0 * p.a) * std::log(y / x) - d * d / (2.0 * t) +
         log_scaled_bessel_i(killed_bessel_index(p), x * y / t);
}

/// Transition density q_t(x, y) of the process killed at the origin.
inline double transition_density_killed(const Params& p, double t, double x, double y) {
  return std::exp(log_transition_density_killed(p, t, x, y));
}

/// Marginal density psi_t(x, y; t0) of the bridge conditioned to hit 0 at t0.
inline double bridge_density(const Params& p, double t, double x, double y, double t0) {
  detail::require_positive(x, "x");
  detail::require_positive(y, "y");
  if (!(t > 0.0 && t < t0)) throw DomainError("bridge_density requires 0 < t < t0");
  const double s = t0 - t;
  const double log_ratio = (4.0 * p.a - 1.0) * std::log(y / x) -
                           (0.5 + 2.0 * p.a) * std::log(s / t0) - y * y / (2.0 * s) +
                           x * x / (2.0 * t0);
  return std::exp(log_transition_density_killed(p, t, x, y) + log_ratio);
}

/// A sampled path of X on a time grid.
struct BesselPath {
  double x0 = 1.0;
  double t0 = kInf;  // conditioned hitting time; +inf when unconditioned
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> drift_integral;  // running integral of a/X ds
  double hitting_time = kInf;          // +inf if the path was censored
  int guard_reflections = 0;

  std::size_t size() const { return times.size(); }
  double final_time() const { return times.back(); }
  double final_value() const { return values.back(); }
};

namespace detail {

struct GuardState {
  int reflections = 0;
  int max_depth = 30;
};

// One Euler-Maruyama step from (t, x) to t1 using the path increment.
// Undershoots of less than one diffusion scale are reflected; larger ones
// halve the step, drawing the midpoint from the same Brownian path.
template <class Drift, class OnStep>
double guarded_step(double x, double t, double t1, double w0, double w1, const Drift& drift,
                    BrownianPath& noise, int depth, GuardState& guard, const OnStep& on_step) {
  const double h = t1 - t;
  double x1 = x + drift(x, t) * h + (w1 - w0);
  if (x1 > 0.0) {
    on_step(t, x, t1, x1);
    return x1;
  }
  if (x1 < 0.0 && -x1 < std::sqrt(h)) {
    x1 = -x1;
    ++guard.reflections;
    on_step(t, x, t1, x1);
    return x1;
  }
  if (depth >= guard.max_depth) {
    throw StepSizeError("positivity guard exhausted at t = " + std::to_string(t) +
                        " (h = " + std::to_string(h) + "); reduce dt");
  }
  const double tm = 0.5 * (t + t1);
  const double wm = noise(tm);
  const double xm = guarded_step(x, t, tm, w0, wm, drift, noise, depth + 1, guard, on_step);
  return guarded_step(xm, tm, t1, wm, w1, drift, noise, depth + 1, guard, on_step);
}

inline double next_landmark(std::span<const double> landmarks, double t) {
  auto it = std::upper_bound(landmarks.begin(), landmarks.end(), t);
  return it == landmarks.end() ? kInf : *it;
}

}  // namespace detail

/// Incremental sampler for the bridge
///   dX = [2a/X - X/(t0 - t)] dt + dW,  X(0) = x0,  X(t0) = 0.
///
/// Step size is the power of two below min(dt, 0.1 X^2, 0.1 (t0 - t)), aligned
/// to the dyadic grid so that halving dt refines the same Brownian path.
/// Steps never drop below dt / 2^12; there the 2a/X term is taken implicitly. The
/// stepper integrates to t0 - delta (delta = dyadic dt) and then jumps to
/// (t0, 0).
class BridgeStepper {
 public:
  BridgeStepper(const Params& p, double x0, double t0, double dt, BrownianPath& noise,
                double drift_scale = 1.0, int max_halvings = 30)
      : p_(p), t0_(t0), dt_(dyadic_floor(dt)), drift_scale_(drift_scale), noise_(noise) {
    guard_.max_depth = max_halvings;
    detail::require_positive(x0, "x0");
    detail::require_positive(t0, "t0");
    detail::require_positive(dt, "dt");
    delta_ = std::min(dt_, dyadic_floor(0.25 * t0));
    x_ = x0;
    path_.x0 = x0;
    path_.t0 = t0;
    record();
  }

  double time() const { return t_; }
  double value() const { return x_; }
  double drift_integral() const { return integral_; }
  double cutoff() const { return t0_ - delta_; }
  bool finished() const { return done_; }
  int implicit_steps() const { return implicit_steps_; }
  const BesselPath& path() const { return path_; }
  BesselPath take_path() { return std::move(path_); }

  /// Advances by one accepted grid step, never past `limit` or the cutoff.
  /// Returns false (doing nothing) once the cutoff has been reached.
  bool step(double limit = kInf) {
    if (done_ || t_ >= cutoff() || t_ >= limit) return false;
    const double a = p_.a;
    const double t0 = t0_;
    const double lift = 2.0 * a * drift_scale_;
    const double h_floor = std::ldexp(dt_, -kFloorLevels);
    const double w0 = w_;
    if (0.1 * x_ * x_ < h_floor) {
      // Near the origin: implicit in the singular drift, which keeps X
      // positive without shrinking the step further.
      const double target = std::min({next_grid_point(t_, h_floor), limit, cutoff()});
      const double h = target - t_;
      const double w1 = noise_(target);
      const double y = x_ - x_ * h / (t0 - t_) + (w1 - w0);
      x_ = 0.5 * (y + std::sqrt(y * y + 4.0 * lift * h));
      integral_ += h * a / x_;
      ++implicit_steps_;
      t_ = target;
      w_ = w1;
      record();
      return true;
    }
    const double hmax = std::min({dt_, 0.1 * x_ * x_, 0.1 * (t0_ - t_)});
    double target = next_grid_point(t_, dyadic_floor(hmax));
    target = std::min({target, limit, cutoff()});
    const double w1 = noise_(target);
    auto drift = [lift, t0](double x, double t) { return lift / x - x / (t0 - t); };
    double acc = 0.0;
    auto accumulate = [&acc, a](double ta, double xa, double tb, double xb) {
      acc += 0.5 * (tb - ta) * (a / xa + a / xb);
    };
    x_ = detail::guarded_step(x_, t_, target, w0, w1, drift, noise_, 0, guard_, accumulate);
    integral_ += acc;
    t_ = target;
    w_ = w1;
    record();
    return true;
  }

  /// Runs to `limit` (or the cutoff, whichever is first).
  void run_until(double limit) {
    while (step(limit)) {
    }
  }

  /// Runs to the cutoff and appends the terminal point (t0, 0).
  void finish() {
    if (done_) return;
    run_until(kInf);
    // X behaves like sqrt(t0 - s) over the final stretch, so the remaining
    // integral of a/X is about 2 a delta / X(t0 - delta).
    integral_ += 2.0 * p_.a * (t0_ - t_) / x_;
    t_ = t0_;
    x_ = 0.0;
    done_ = true;
    path_.hitting_time = t0_;
    record();
  }

 private:
  void record() {
    path_.times.push_back(t_);
    path_.values.push_back(x_);
    path_.drift_integral.push_back(integral_);
    path_.guard_reflections = guard_.reflections;
  }

  static constexpr int kFloorLevels = 12;  // smallest step is dt / 2^12

  Params p_;
  double t0_;
  double dt_;
  double delta_ = 0.0;
  double drift_scale_;
  BrownianPath& noise_;
  detail::GuardState guard_;
  BesselPath path_;
  double t_ = 0.0;
  double x_ = 0.0;
  double integral_ = 0.0;
  double w_ = 0.0;
  int implicit_steps_ = 0;
  bool done_ = false;
};

struct BridgeOptions {
  double stop_time = kInf;         // stop early (exactly at this time) if < t0
  std::vector<double> landmarks;   // sorted times the grid must contain
  double drift_scale = 1.0;        // 1 for the true bridge; != 1 only for power checks
  int max_halvings = 30;           // positivity-guard budget per step
};

/// Samples the bridge from x0 that hits 0 exactly at t0.
inline BesselPath sample_bridge(const Params& p, double x0, double t0, double dt,
                                BrownianPath& noise, const BridgeOptions& opts = {}) {
  BridgeStepper stepper(p, x0, t0, dt, noise, opts.drift_scale, opts.max_halvings);
  const bool full = !(opts.stop_time < t0);
  const double end = full ? kInf : opts.stop_time;
  for (;;) {
    const double limit = std::min(detail::next_landmark(opts.landmarks, stepper.time()), end);
    if (!stepper.step(limit)) break;
  }
  if (full) stepper.finish();
  return stepper.take_path();
}

struct BesselOptions {
  double horizon = kInf;           // censor at this time
  double absorb_level = -1.0;      // default sqrt(dyadic dt)
  double exit_low = 0.0;           // stop on leaving (exit_low, exit_high)
  double exit_high = kInf;
  std::vector<double> landmarks;
};

/// Samples dX = (1-2a)/X dt + dW from x0 until absorption at the origin.
///
/// Below the absorption level, or when a step overshoots the origin by more
/// than one diffusion scale, the remaining hitting time is drawn exactly from
/// its law x^2/(2G), G ~ Gamma(2a - 1/2), and the path is closed with (T, 0).
inline BesselPath sample_bessel(const Params& p, double x0, double dt, BrownianPath& noise,
                                const BesselOptions& opts = {}) {
  detail::require_positive(x0, "x0");
  detail::require_positive(dt, "dt");
  const double mu = 2.0 * p.a - 0.5;
  if (!(mu > 0.0)) throw DomainError("sample_bessel requires a > 1/4");
  const double h_base = dyadic_floor(dt);
  const double absorb = opts.absorb_level > 0.0 ? opts.absorb_level : std::sqrt(h_base);

  BesselPath path;
  path.x0 = x0;
  double t = 0.0;
  double x = x0;
  double integral = 0.0;
  double w = 0.0;
  auto record = [&] {
    path.times.push_back(t);
    path.values.push_back(x);
    path.drift_integral.push_back(integral);
  };
  record();
  const double a = p.a;
  const double c = 1.0 - 2.0 * a;

  auto inside = [&] { return x > opts.exit_low && x < opts.exit_high; };
  bool overshoot = false;
  while (x > absorb && t < opts.horizon && inside()) {
    const double hmax = std::min(h_base, 0.1 * x * x);
    double target = next_grid_point(t, dyadic_floor(hmax));
    target = std::min({target, opts.horizon, detail::next_landmark(opts.landmarks, t)});
    const double h = target - t;
    const double w1 = noise(target);
    double x1 = x + c / x * h + (w1 - w);
    if (!(x1 > 0.0)) {
      if (-x1 >= std::sqrt(h)) {
        overshoot = true;
        break;
      }
      x1 = -x1;
      ++path.guard_reflections;
    }
    integral += 0.5 * h * (a / x + a / x1);
    x = x1;
    t = target;
    w = w1;
    record();
  }
  if ((overshoot || x <= absorb) && inside()) {
    auto engine = noise.aux_engine(1);
    std::gamma_distribution<double> gamma(mu, 1.0);
    const double remaining = x * x / (2.0 * gamma(engine));
    integral += 2.0 * a * remaining / x;
    t += remaining;
    x = 0.0;
    path.hitting_time = t;
    record();
  }
  return path;
}

/// The gap X_t = g_t(x) - U_t under SLE from 0 to infinity (U = -B), together
/// with g_t'(x). Here dX = a/X dt + dB and d log g' = -a/X^2 dt.
struct GapPath {
  BesselPath path;
  std::vector<double> gprime;
};

/// Samples the gap process until it leaves (lo, hi) or the horizon is hit.
inline GapPath sample_gap_process(const Params& p, double x0, double horizon, double dt,
                                  BrownianPath& noise, double lo, double hi,
                                  std::span<const double> landmarks = {}) {
  detail::require_positive(x0, "x0");
  detail::require_positive(dt, "dt");
  if (!(lo < x0 && x0 < hi)) throw DomainError("gap process needs lo < x0 < hi");
  const double h_base = dyadic_floor(dt);
  GapPath out;
  out.path.x0 = x0;
  detail::GuardState guard;
  double t = 0.0;
  double x = x0;
  double integral = 0.0;
  double log_gprime = 0.0;
  double w = 0.0;
  auto record = [&] {
    out.path.times.push_back(t);
    out.path.values.push_back(x);
    out.path.drift_integral.push_back(integral);
    out.gprime.push_back(std::exp(log_gprime));
  };
  record();
  const double a = p.a;
  auto drift = [a](double xv, double) { return a / xv; };
  while (x > lo && x < hi && t < horizon) {
    const double hmax = std::min(h_base, 0.1 * x * x);
    double target = next_grid_point(t, dyadic_floor(hmax));
    target = std::min({target, horizon, detail::next_landmark(landmarks, t)});
    double acc = 0.0;
    double acc_log = 0.0;
    auto accumulate = [&](double ta, double xa, double tb, double xb) {
      acc += 0.5 * (tb - ta) * (a / xa + a / xb);
      acc_log -= 0.5 * (tb - ta) * (a / (xa * xa) + a / (xb * xb));
    };
    const double w1 = noise(target);
    x = detail::guarded_step(x, t, target, w, w1, drift, noise, 0, guard, accumulate);
    integral += acc;
    log_gprime += acc_log;
    w = w1;
    t = target;
    record();
  }
  out.path.guard_reflections = guard.reflections;
  return out;
}

/// g_t'(x) along a path of the gap X_t = g_t(x) - U_t, from
/// d log g' = -a/X^2 dt (trapezoid rule on the path grid). Entries at X = 0
/// are set to 0.
inline std::vector<double> loewner_derivative_along(const Params& p, const BesselPath& path) {
  std::vector<double> out(path.size(), 1.0);
  double log_g = 0.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    const double xa = path.values[k - 1];
    const double xb = path.values[k];
    if (!(xa > 0.0 && xb > 0.0)) {
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(k), out.end(), 0.0);
      break;
    }
    log_g -= 0.5 * (path.times[k] - path.times[k - 1]) * (p.a / (xa * xa) + p.a / (xb * xb));
    out[k] = std::exp(log_g);
  }
  return out;
}

/// Martingale weights along a path:
///   M = (X/X0)^(1-3a) g'^b,   N = phi(X, t0 - t),   M~ = M N.
struct WeightTrace {
  std::vector<double> times;
  std::vector<double> M;
  std::vector<double> N;
  std::vector<double> M_tilde;
};

/// Computes the weights at every grid index with t < t0. A terminal point at
/// t >= t0 (the bridge endpoint) carries no weight and is dropped.
inline WeightTrace weight_trace(const Params& p, const BesselPath& path,
                                std::span<const double> gprime, double t0) {
  if (gprime.size() != path.size()) throw DomainError("weight_trace: grid size mismatch");
  if (path.size() == 0) return {};
  if (std::abs(gprime[0] - 1.0) > 1e-15) throw DomainError("weight_trace: g'(0) must be 1");
  WeightTrace w;
  const double x0 = path.values[0];
  for (std::size_t k = 0; k < path.size(); ++k) {
    const double t = path.times[k];
    if (!(t < t0)) break;
    const double x = path.values[k];
    if (!(x > 0.0)) {
      throw DomainError("weight_trace: nonpositive X before the terminal cutoff");
    }
    const double m = std::pow(x / x0, 1.0 - 3.0 * p.a) * std::pow(gprime[k], p.b);
    const double n = first_passage_density(p, x, t0 - t, false);
    w.times.push_back(t);
    w.M.push_back(m);
    w.N.push_back(n);
    w.M_tilde.push_back(m * n);
  }
  return w;
}

}  // namespace slerev
