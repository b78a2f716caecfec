#pragma once

// Chordal Loewner evolution dg/dt = a/(g - U) with piecewise-constant
// driving. Each constant piece is the exact vertical-slit map
//   w -> U + sqrt((w - U)^2 + 2 a delta),
// so a map is a list of (duration, drive) steps applied in order.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "slerev/params.hpp"

namespace slerev {

using Complex = std::complex<double>;

/// A step swallows a point when its square-root argument (w - U)^2 + 2 a delta
/// lies on the closed positive real axis up to this tolerance, or when the
/// image lands within this distance of the real line.
inline constexpr double kSwallowTolerance = 1e-12;

/// Square root with nonnegative imaginary part, accurate on both half planes.
inline Complex sqrt_upper(Complex z) {
  const double x = z.real();
  const double y = z.imag();
  const double r = std::sqrt(x * x + y * y);
  if (x >= 0.0) {
    const double t = std::sqrt(0.5 * (r + x));
    if (t == 0.0) return {0.0, 0.0};
    const double im = y / (2.0 * t);
    return y >= 0.0 ? Complex{t, im} : Complex{-t, -im};
  }
  const double s = std::sqrt(0.5 * (r - x));
  return {y / (2.0 * s), s};
}

/// Driving function sampled on an increasing time grid starting at 0.
struct DrivingPath {
  std::vector<double> times;
  std::vector<double> values;
  double a = 0.5;

  std::size_t size() const { return times.size(); }
  double duration() const { return times.empty() ? 0.0 : times.back() - times.front(); }

  void validate() const {
    if (times.size() != values.size()) throw DomainError("DrivingPath: size mismatch");
    if (times.empty()) return;
    if (times.front() != 0.0) throw DomainError("DrivingPath: grid must start at 0");
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (!std::isfinite(values[k])) throw DomainError("DrivingPath: nonfinite driving value");
      if (k > 0 && !(times[k] > times[k - 1])) {
        throw DomainError("DrivingPath: grid must be strictly increasing");
      }
    }
  }
};

struct LoewnerStep {
  double duration;
  double drive;
};

/// Composition of exact constant-driving Loewner steps.
class MapAtlas {
 public:
  explicit MapAtlas(double a = 0.5) : a_(a) {}

  double a() const { return a_; }
  std::span<const LoewnerStep> steps() const { return steps_; }
  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  double total_time() const { return total_time_; }
  double total_capacity() const { return a_ * total_time_; }
  /// Driving value of the final step, i.e. the image of the current tip.
  double tip_image() const { return steps_.back().drive; }

  void push(double duration, double drive) {
    steps_.push_back({duration, drive});
    total_time_ += duration;
  }

  /// Appends `next`, so the result maps by this atlas first, then by `next`.
  void append(const MapAtlas& next) {
    if (next.a_ != a_) throw DomainError("MapAtlas: composing atlases with different a");
    steps_.insert(steps_.end(), next.steps_.begin(), next.steps_.end());
    total_time_ += next.total_time_;
  }

  MapAtlas then(const MapAtlas& next) const {
    MapAtlas out = *this;
    out.append(next);
    return out;
  }

  void set_total_time(double t) { total_time_ = t; }

 private:
  double a_;
  std::vector<LoewnerStep> steps_;
  double total_time_ = 0.0;
};

/// One exact step per grid interval, driven by the interval midpoint value.
inline MapAtlas atlas_from_driving(const DrivingPath& d) {
  d.validate();
  MapAtlas atlas(d.a);
  for (std::size_t k = 0; k + 1 < d.size(); ++k) {
    atlas.push(d.times[k + 1] - d.times[k], 0.5 * (d.values[k] + d.values[k + 1]));
  }
  atlas.set_total_time(d.duration());
  return atlas;
}

namespace detail {

inline bool swallowed(Complex arg, Complex root) {
  if (root.imag() < kSwallowTolerance) return true;
  return std::abs(arg.imag()) <= kSwallowTolerance && arg.real() >= -kSwallowTolerance;
}

inline Complex forward_step(Complex w, const LoewnerStep& s, double two_a) {
  const Complex v = w - s.drive;
  const Complex arg = v * v + two_a * s.duration;
  const Complex root = sqrt_upper(arg);
  if (swallowed(arg, root)) throw SwallowedPointError("point swallowed by the hull");
  return s.drive + root;
}

}  // namespace detail

/// g(z) for z in the upper half plane.
inline Complex evaluate_g(const MapAtlas& m, Complex z) {
  if (!(z.imag() > 0.0)) throw DomainError("evaluate_g requires Im z > 0");
  const double two_a = 2.0 * m.a();
  Complex w = z;
  for (const auto& s : m.steps()) w = detail::forward_step(w, s, two_a);
  return w;
}

struct ValueAndDerivative {
  Complex value;
  Complex derivative;
};

/// g(z) and g'(z) in one sweep; g' is the product of per-step factors
/// (w - U)/sqrt((w - U)^2 + 2 a delta).
inline ValueAndDerivative evaluate_with_derivative(const MapAtlas& m, Complex z) {
  if (!(z.imag() > 0.0)) throw DomainError("evaluate_g_prime requires Im z > 0");
  const double two_a = 2.0 * m.a();
  Complex w = z;
  Complex d = 1.0;
  for (const auto& s : m.steps()) {
    const Complex v = w - s.drive;
    const Complex arg = v * v + two_a * s.duration;
    const Complex root = sqrt_upper(arg);
    if (detail::swallowed(arg, root)) throw SwallowedPointError("point swallowed by the hull");
    d *= v / root;
    w = s.drive + root;
  }
  return {w, d};
}

inline Complex evaluate_g_prime(const MapAtlas& m, Complex z) {
  return evaluate_with_derivative(m, z).derivative;
}

/// Evaluates g on many points, in place.
inline void evaluate_in_place(const MapAtlas& m, std::span<Complex> points) {
  for (auto& z : points) z = evaluate_g(m, z);
}

/// Image of a real boundary point off the hull. The square root is taken
/// positive to the right of the driving value and negative to the left.
inline double evaluate_real(const MapAtlas& m, double x) {
  const double two_a = 2.0 * m.a();
  double w = x;
  for (const auto& s : m.steps()) {
    const double v = w - s.drive;
    if (v == 0.0) throw SwallowedPointError("boundary point coincides with the driving value");
    const double root = std::sqrt(v * v + two_a * s.duration);
    w = s.drive + (v > 0.0 ? root : -root);
  }
  return w;
}

/// Derivative of g at a real boundary point off the hull (positive).
inline double evaluate_real_prime(const MapAtlas& m, double x) {
  const double two_a = 2.0 * m.a();
  double w = x;
  double d = 1.0;
  for (const auto& s : m.steps()) {
    const double v = w - s.drive;
    if (v == 0.0) throw SwallowedPointError("boundary point coincides with the driving value");
    const double root = std::sqrt(v * v + two_a * s.duration);
    d *= std::abs(v) / root;
    w = s.drive + (v > 0.0 ? root : -root);
  }
  return d;
}

/// Inverse of one exact step, mapping the closed upper half plane back onto
/// the slit domain. Real points below the slit height go to the slit.
inline Complex inverse_step(Complex w, const LoewnerStep& s, double two_a) {
  const Complex v = w - s.drive;
  const Complex arg = v * v - two_a * s.duration;
  if (w.imag() == 0.0) {
    const double r = arg.real();
    if (r < 0.0) return {s.drive, std::sqrt(-r)};
    const double root = std::sqrt(r);
    return {s.drive + (v.real() >= 0.0 ? root : -root), 0.0};
  }
  return s.drive + sqrt_upper(arg);
}

/// Preimage under the first `count` steps of the atlas.
inline Complex invert_prefix(const MapAtlas& m, std::size_t count, Complex w) {
  const double two_a = 2.0 * m.a();
  const auto steps = m.steps();
  for (std::size_t k = count; k-- > 0;) w = inverse_step(w, steps[k], two_a);
  return w;
}

inline Complex invert(const MapAtlas& m, Complex w) { return invert_prefix(m, m.size(), w); }

/// Curve point reached after the first k steps (k >= 1): the preimage of
/// that step's driving value.
inline Complex tip_point(const MapAtlas& m, std::size_t k) {
  if (k == 0 || k > m.size()) throw DomainError("tip_point: step index out of range");
  return invert_prefix(m, k, Complex{m.steps()[k - 1].drive, 0.0});
}

/// Builds a Loewner atlas for a curve given by points, one vertical-slit step
/// per point: each new point is mapped by the current atlas and the slit
/// below its image is removed.
class CurveZipper {
 public:
  explicit CurveZipper(double a) : atlas_(a) {}

  void add_point(Complex z) {
    const Complex w = evaluate_g(atlas_, z);
    const double two_a = 2.0 * atlas_.a();
    atlas_.push(w.imag() * w.imag() / two_a, w.real());
  }

  const MapAtlas& atlas() const { return atlas_; }
  double capacity() const { return atlas_.total_capacity(); }

 private:
  MapAtlas atlas_;
};

/// First grid time at which z is swallowed by the hull, or +inf.
///
/// Interior points are swallowed when a step sends them to the real line;
/// real points when the driving value reaches or crosses their image.
inline double swallow_time(const DrivingPath& d, Complex z) {
  d.validate();
  const double two_a = 2.0 * d.a;
  if (z.imag() < 0.0) throw DomainError("swallow_time requires Im z >= 0");
  if (z.imag() == 0.0) {
    double w = z.real();
    if (d.size() == 0) return std::numeric_limits<double>::infinity();
    if (w == d.values.front()) return d.times.front();
    int side = w > d.values.front() ? 1 : -1;
    for (std::size_t k = 0; k + 1 < d.size(); ++k) {
      const double u = 0.5 * (d.values[k] + d.values[k + 1]);
      const double v = w - u;
      const int s = v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
      if (s != side || std::abs(v) < kSwallowTolerance) {
        return d.times[k + 1];
      }
      side = s;
      const double root = std::sqrt(v * v + two_a * (d.times[k + 1] - d.times[k]));
      w = u + (v > 0.0 ? root : -root);
    }
    return std::numeric_limits<double>::infinity();
  }
  Complex w = z;
  for (std::size_t k = 0; k + 1 < d.size(); ++k) {
    const LoewnerStep s{d.times[k + 1] - d.times[k], 0.5 * (d.values[k] + d.values[k + 1])};
    const Complex v = w - s.drive;
    const Complex arg = v * v + two_a * s.duration;
    const Complex root = sqrt_upper(arg);
    if (detail::swallowed(arg, root)) return d.times[k + 1];
    w = s.drive + root;
  }
  return std::numeric_limits<double>::infinity();
}

/// Radius sup{|z| : z in hull} of the hull generated by the driving path.
///
/// The hull of a piecewise-constant chain is a union of preimages of vertical
/// slits; its outermost points are the traced tips, so the radius is the
/// maximum modulus over traced tips (at most `max_tips` of them, evenly
/// strided) together with the base point.
inline double hull_radius_estimate(const DrivingPath& d, std::size_t max_tips = 4096) {
  const MapAtlas atlas = atlas_from_driving(d);
  double radius = d.size() > 0 ? std::abs(d.values.front()) : 0.0;
  const std::size_t n = atlas.size();
  if (n == 0) return radius;
  const std::size_t stride = std::max<std::size_t>(1, n / max_tips);
  for (std::size_t k = n; k >= 1; k = (k > stride ? k - stride : 0)) {
    radius = std::max(radius, std::abs(tip_point(atlas, k)));
    if (k <= stride) break;
  }
  return radius;
}

}  // namespace slerev
