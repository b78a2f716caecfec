#pragma once

// Samplers for SLE to infinity, SLE between two boundary points with fixed
// total capacity a*t0 (the measure mu#), the two-stage measures mu_r, and the
// coupling of mu_r with mu_s. Maps are compared through their values on a
// fixed disk of interior points far above every hull of capacity <= a.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "slerev/bessel.hpp"
#include "slerev/loewner.hpp"
#include "slerev/noise.hpp"
#include "slerev/parallel.hpp"
#include "slerev/params.hpp"

namespace slerev {

/// Thirteen points in the closed disk |z - (sqrt(8a) + 1) i| <= 1: the
/// center and twelve equally spaced points on the circle of radius 0.999.
struct TestSet {
  Complex center;
  double radius = 1.0;
  std::vector<Complex> points;

  static constexpr std::size_t kBoundaryPoints = 12;
  static constexpr double kShrink = 0.999;

  static TestSet for_params(const Params& p) {
    TestSet ts;
    ts.center = Complex{0.0, std::sqrt(8.0 * p.a) + 1.0};
    ts.points.push_back(ts.center);
    for (std::size_t j = 0; j < kBoundaryPoints; ++j) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(j) / kBoundaryPoints;
      ts.points.push_back(ts.center + kShrink * ts.radius * std::polar(1.0, theta));
    }
    return ts;
  }

  std::size_t size() const { return points.size(); }
  double min_imag() const {
    double m = points.front().imag();
    for (const auto& z : points) m = std::min(m, z.imag());
    return m;
  }
};

struct SampleMeta {
  std::string kind;   // "musharp", "mu_r", "coupled_r", "coupled_s", ...
  double x1 = 0.0;
  double x2 = 0.0;
  double r = 0.0;
  double t0 = 1.0;
  std::uint64_t seed = 0;
};

/// A sampled mapping-out function restricted to the test set.
struct MapSample {
  std::vector<Complex> values;
  SampleMeta meta;
};

/// Knobs that deliberately corrupt the sampler; only power checks change them.
struct Corruption {
  double drift_scale = 1.0;    // bridge drift 2a -> 2a * drift_scale
  double driving_scale = 1.0;  // U -> driving_scale * U
};

/// U_t = -B_t on the dyadic grid below dt, ending exactly at t.
inline DrivingPath sle_to_infinity_driving(const Params& p, double t, double dt,
                                           BrownianPath& noise, double start = 0.0) {
  detail::require_positive(t, "t");
  detail::require_positive(dt, "dt");
  const double h = dyadic_floor(dt);
  DrivingPath d;
  d.a = p.a;
  d.times.push_back(0.0);
  d.values.push_back(start);
  double s = 0.0;
  while (s < t) {
    s = std::min(next_grid_point(s, h), t);
    d.times.push_back(s);
    d.values.push_back(start - noise(s));
  }
  return d;
}

/// Driving values for a curve aimed at `target` whose gap to the target's
/// image follows a given path X. The image G of the target is carried through
/// the same midpoint slit steps the atlas uses, and each step's driving value
/// is solved so that G - U = sign * X holds exactly on the grid. With
/// S = X_k + X_{k+1} the midpoint sits at distance D = (S^2 - 2ah)/(2S) from
/// G; steps with S^2 < 4ah (too coarse for the gap) raise X_{k+1} so that
/// S^2 = 4ah and are counted.
class GapDriving {
 public:
  GapDriving(double a, double target, double sign, double x0)
      : two_a_(2.0 * a), sign_(sign), g_(target), x_(x0), u_(target - sign * x0) {}

  double value() const { return u_; }
  double target_image() const { return g_; }
  int adjusted_steps() const { return adjusted_; }

  /// Advances by h to gap x_next; returns the new driving value.
  double advance(double h, double x_next) {
    const double floor = 2.0 * std::sqrt(0.5 * two_a_ * h);
    double S = x_ + x_next;
    if (S * S <= 2.0 * two_a_ * h) {
      S = floor;
      ++adjusted_;
    }
    const double D = (S * S - two_a_ * h) / (2.0 * S);
    const double m = g_ - sign_ * D;
    g_ = m + sign_ * (S - D);
    x_ = S - x_;
    u_ = g_ - sign_ * x_;
    return u_;
  }

 private:
  double two_a_;
  double sign_;
  double g_;
  double x_;
  double u_;
  int adjusted_ = 0;
};

struct FixedDurationDriving {
  DrivingPath driving;
  BesselPath bridge;
  int adjusted_steps = 0;
};

/// Driving function of SLE from x1 to x2 with total capacity a*t0:
/// U = g_t(x2) - sign(x2 - x1) X_t with X the bridge started at |x2 - x1|
/// (see GapDriving). With `stop_time` < t0 the path ends there.
inline FixedDurationDriving fixed_duration_driving(const Params& p, double x1, double x2,
                                                   double t0, double dt, BrownianPath& noise,
                                                   double stop_time = kInf,
                                                   const Corruption& corruption = {}) {
  if (x1 == x2) throw DomainError("fixed_duration_driving requires x1 != x2");
  BridgeOptions opts;
  opts.stop_time = stop_time;
  opts.drift_scale = corruption.drift_scale;
  FixedDurationDriving out;
  out.bridge = sample_bridge(p, std::abs(x2 - x1), t0, dt, noise, opts);
  const double sign = x2 > x1 ? 1.0 : -1.0;
  const auto& b = out.bridge;
  out.driving.a = p.a;
  out.driving.times = b.times;
  out.driving.values.resize(b.size());
  GapDriving gap(p.a, x2, sign, b.values[0]);
  out.driving.values[0] = corruption.driving_scale * x1;
  for (std::size_t k = 1; k < b.size(); ++k) {
    out.driving.values[k] =
        corruption.driving_scale * gap.advance(b.times[k] - b.times[k - 1], b.values[k]);
  }
  out.adjusted_steps = gap.adjusted_steps();
  return out;
}

inline std::vector<Complex> evaluate_on(const MapAtlas& m, std::span<const Complex> points) {
  std::vector<Complex> out(points.begin(), points.end());
  evaluate_in_place(m, out);
  return out;
}

/// One map from mu#(x1, x2; t0) evaluated on the test set.
inline MapSample sample_musharp(const Params& p, double x1, double x2, double t0, double dt,
                                BrownianPath& noise, const TestSet& ts,
                                const Corruption& corruption = {}) {
  const auto fd = fixed_duration_driving(p, x1, x2, t0, dt, noise, kInf, corruption);
  MapSample s;
  s.values = evaluate_on(atlas_from_driving(fd.driving), ts.points);
  s.meta = SampleMeta{"musharp", x1, x2, 0.0, t0, noise.seed()};
  return s;
}

/// Stream tags for the independent Brownian paths used inside one sample.
enum class Stream : std::uint64_t { kFirst = 1, kSecond = 2, kFillS = 3, kFillR = 4 };

inline BrownianPath stream_path(std::uint64_t sample_seed, Stream s) {
  return BrownianPath(derive_seed(sample_seed, static_cast<std::uint64_t>(s)));
}

/// Result of growing the first piece of mu#(0, x; 1) up to time r.
struct FirstStage {
  MapAtlas atlas;
  double tip_image = 0.0;     // U(r)
  double target_image = 0.0;  // g_r(x)
};

inline FirstStage grow_first_stage(const Params& p, double x, double r, double dt,
                                   BrownianPath& noise) {
  FirstStage st{MapAtlas(p.a), 0.0, x};
  if (r <= 0.0) return st;
  const auto fd = fixed_duration_driving(p, 0.0, x, 1.0, dt, noise, r);
  st.atlas = atlas_from_driving(fd.driving);
  st.tip_image = fd.driving.values.back();
  if (r >= 1.0) return st;
  st.target_image = evaluate_real(st.atlas, x);
  if (!(st.target_image > st.tip_image)) {
    throw SwallowedPointError("target point swallowed before time r = " + std::to_string(r));
  }
  return st;
}

/// One map from mu_r (t0 = 1): grow mu#(0, x; 1) to time r, then complete
/// with mu#(g_r(x), U(r); 1 - r) in the slit domain.
inline MapSample sample_mu_r(const Params& p, double x, double r, double dt,
                             std::uint64_t sample_seed, const TestSet& ts) {
  if (!(r >= 0.0 && r <= 1.0)) throw DomainError("sample_mu_r requires 0 <= r <= 1");
  detail::require_positive(x, "x");
  auto first_noise = stream_path(sample_seed, Stream::kFirst);
  const FirstStage first = grow_first_stage(p, x, r, dt, first_noise);
  MapAtlas atlas = first.atlas;
  if (r < 1.0) {
    auto second_noise = stream_path(sample_seed, Stream::kSecond);
    const auto fd = fixed_duration_driving(p, first.target_image, first.tip_image, 1.0 - r, dt,
                                           second_noise);
    atlas.append(atlas_from_driving(fd.driving));
  }
  MapSample s;
  s.values = evaluate_on(atlas, ts.points);
  s.meta = SampleMeta{"mu_r", 0.0, x, r, 1.0, sample_seed};
  return s;
}

/// Coupled maps with laws mu_r and mu_s sharing the first two stages.
struct CoupledPair {
  MapSample mu_r;
  MapSample mu_s;
  double endpoint_gap = 0.0;  // |x2 - y2| before the final fill of capacity a*(s - r)
};

/// Stage 1: mu#(0, x; 1) up to time r. Stage 2: from g_r(x) toward the tip
/// image with residual duration 1 - r, stopped at time 1 - s. The remaining
/// capacity a*(s - r) is filled once from the first tip image toward the
/// second (giving mu_s) and once in the opposite direction (giving mu_r),
/// with independent noise.
inline CoupledPair coupled_pair(const Params& p, double x, double r, double s, double dt,
                                std::uint64_t sample_seed, const TestSet& ts) {
  if (!(r >= 0.0 && r <= s && s <= 1.0)) throw DomainError("coupled_pair requires 0 <= r <= s <= 1");
  detail::require_positive(x, "x");
  const double eps = s - r;
  auto first_noise = stream_path(sample_seed, Stream::kFirst);
  const FirstStage first = grow_first_stage(p, x, r, dt, first_noise);
  MapAtlas base = first.atlas;

  double fill_from_second = first.target_image;  // x2 (the second curve's tip image)
  double fill_from_first = first.tip_image;      // y2 (the first curve's tip image)
  if (r < 1.0 && s < 1.0) {
    auto second_noise = stream_path(sample_seed, Stream::kSecond);
    const double stop = eps > 0.0 ? 1.0 - s : kInf;
    const auto fd = fixed_duration_driving(p, first.target_image, first.tip_image, 1.0 - r, dt,
                                           second_noise, stop);
    const MapAtlas second = atlas_from_driving(fd.driving);
    if (eps > 0.0) {
      fill_from_second = fd.driving.values.back();
      fill_from_first = evaluate_real(second, first.tip_image);
    }
    base.append(second);
  }
  const std::vector<Complex> shared = evaluate_on(base, ts.points);

  CoupledPair out;
  out.mu_r.meta = SampleMeta{"coupled_r", 0.0, x, r, 1.0, sample_seed};
  out.mu_s.meta = SampleMeta{"coupled_s", 0.0, x, s, 1.0, sample_seed};
  if (eps <= 0.0) {
    out.mu_r.values = shared;
    out.mu_s.values = shared;
    return out;
  }
  out.endpoint_gap = std::abs(fill_from_second - fill_from_first);
  auto fill_s_noise = stream_path(sample_seed, Stream::kFillS);
  auto fill_r_noise = stream_path(sample_seed, Stream::kFillR);
  const auto fill_s =
      fixed_duration_driving(p, fill_from_first, fill_from_second, eps, dt, fill_s_noise);
  const auto fill_r =
      fixed_duration_driving(p, fill_from_second, fill_from_first, eps, dt, fill_r_noise);
  out.mu_s.values = evaluate_on(atlas_from_driving(fill_s.driving), shared);
  out.mu_r.values = evaluate_on(atlas_from_driving(fill_r.driving), shared);
  return out;
}

/// Sup-norm distance over the test set.
inline double sup_distance(const MapSample& u, const MapSample& v) {
  double d = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) d = std::max(d, std::abs(u.values[i] - v.values[i]));
  return d;
}

/// Capacity estimate z (g(z) - z) at a far point, for bookkeeping checks.
inline double capacity_from_asymptotics(const MapAtlas& m, double radius = 1e3) {
  const Complex z{0.0, radius};
  return (z * (evaluate_g(m, z) - z)).real();
}

/// Batch of mu# samples; sample i uses the seed derived from (master, tag, i).
inline std::vector<MapSample> musharp_batch(const Params& p, double x1, double x2, double t0,
                                            double dt, std::size_t n, std::uint64_t master,
                                            std::uint64_t tag, const TestSet& ts,
                                            unsigned threads, const Corruption& corruption = {}) {
  std::vector<MapSample> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    BrownianPath noise(derive_seed(master, tag, i));
    out[i] = sample_musharp(p, x1, x2, t0, dt, noise, ts, corruption);
  });
  return out;
}

inline std::vector<MapSample> mu_r_batch(const Params& p, double x, double r, double dt,
                                         std::size_t n, std::uint64_t master, std::uint64_t tag,
                                         const TestSet& ts, unsigned threads) {
  std::vector<MapSample> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    out[i] = sample_mu_r(p, x, r, dt, derive_seed(master, tag, i), ts);
  });
  return out;
}

}  // namespace slerev
