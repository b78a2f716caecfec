#pragma once

// Two curves grown from both ends of a fixed-capacity SLE, each stopped when
// its own half-plane capacity reaches a*r_j, in either order; and the
// reweighting of independent SLE paths to infinity that produces the same
// law.

#include <cmath>
#include <cstdint>
#include <vector>

#include "slerev/bessel.hpp"
#include "slerev/loewner.hpp"
#include "slerev/sampler.hpp"

namespace slerev {

/// Outcome of growing one curve piece incrementally.
struct GrownCurve {
  MapAtlas atlas;          // Loewner steps of the piece in its own growth domain
  MapAtlas own;            // mapping-out function of the piece alone, rezipped in H
  double stop_time = 0.0;  // bridge time at which growth stopped
  double tip_image = 0.0;  // driving value at the stop
  int skipped_points = 0;  // traced points the rezipper could not place
};

namespace detail {

// Grows SLE from `from` to `to` with duration t0 in the image domain of
// `base` (empty for H), mapping traced tips back through `base` and rezipping
// them in H. Stops once the rezipped capacity reaches `capacity`.
inline GrownCurve grow_until_capacity(const Params& p, double from, double to, double t0,
                                      double capacity, double dt, BrownianPath& noise,
                                      const MapAtlas& base) {
  GrownCurve out{MapAtlas(p.a), MapAtlas(p.a)};
  const double sign = to > from ? 1.0 : -1.0;
  BridgeStepper stepper(p, std::abs(to - from), t0, dt, noise);
  GapDriving gap(p.a, to, sign, std::abs(to - from));
  CurveZipper zipper(p.a);
  double previous = from;
  double previous_time = 0.0;
  while (zipper.capacity() < capacity) {
    if (!stepper.step()) {
      throw StepSizeError("curve reached its terminal cutoff before the capacity stop");
    }
    const double u = gap.advance(stepper.time() - previous_time, stepper.value());
    out.atlas.push(stepper.time() - previous_time, 0.5 * (previous + u));
    previous = u;
    previous_time = stepper.time();
    Complex tip = tip_point(out.atlas, out.atlas.size());
    if (!base.empty()) tip = invert(base, tip);
    if (!(tip.imag() > 0.0)) {
      ++out.skipped_points;
      continue;
    }
    try {
      zipper.add_point(tip);
    } catch (const SwallowedPointError&) {
      ++out.skipped_points;
    }
  }
  out.own = zipper.atlas();
  out.stop_time = stepper.time();
  out.tip_image = previous;
  return out;
}

}  // namespace detail

/// One draw of the pair (gamma^1, gamma^2) summarized through the union map.
struct PairSample {
  double own_tip_first = 0.0;   // U^1 = g^1(z_1)
  double own_tip_second = 0.0;  // U^2 = g^2(z_2)
  double union_tip_first = 0.0;   // g(z_1)
  double union_tip_second = 0.0;  // g(z_2)
  double stop_first = 0.0;
  double stop_second = 0.0;
  std::vector<Complex> values;  // g on the test set
  int skipped_points = 0;
};

/// Vector compared across orders: (U^1, U^2, g(z_1), g(z_2), Re/Im g on the test set).
inline std::vector<double> flatten(const PairSample& s) {
  std::vector<double> out = {s.own_tip_first, s.own_tip_second, s.union_tip_first,
                             s.union_tip_second};
  for (const auto& z : s.values) {
    out.push_back(z.real());
    out.push_back(z.imag());
  }
  return out;
}

/// Samples the pair with `first_is_one` deciding which curve is grown first.
/// Curve j starts at x_j; curve 1 stops at capacity a*r1, curve 2 at a*r2.
inline PairSample sample_ordered_pair(const Params& p, double x1, double x2, double r1, double r2,
                                      double dt, std::uint64_t sample_seed, const TestSet& ts,
                                      bool first_is_one) {
  if (x1 == x2) throw DomainError("pair endpoints must differ");
  if (!(r1 > 0.0 && r2 > 0.0 && r1 + r2 < 1.0)) throw DomainError("need r1, r2 > 0 and r1 + r2 < 1");
  const double xa = first_is_one ? x1 : x2;
  const double xb = first_is_one ? x2 : x1;
  const double ra = first_is_one ? r1 : r2;
  const double rb = first_is_one ? r2 : r1;

  auto noise_a = stream_path(sample_seed, Stream::kFirst);
  auto noise_b = stream_path(sample_seed, Stream::kSecond);
  const MapAtlas identity(p.a);
  const GrownCurve first =
      detail::grow_until_capacity(p, xa, xb, 1.0, p.a * ra, dt, noise_a, identity);
  const double start_b = evaluate_real(first.atlas, xb);
  const GrownCurve second = detail::grow_until_capacity(
      p, start_b, first.tip_image, 1.0 - first.stop_time, p.a * rb, dt, noise_b, first.atlas);

  PairSample s;
  const double union_a = evaluate_real(second.atlas, first.tip_image);
  const double union_b = second.tip_image;
  const double own_a = first.own.tip_image();
  const double own_b = second.own.tip_image();
  s.own_tip_first = first_is_one ? own_a : own_b;
  s.own_tip_second = first_is_one ? own_b : own_a;
  s.union_tip_first = first_is_one ? union_a : union_b;
  s.union_tip_second = first_is_one ? union_b : union_a;
  s.stop_first = first_is_one ? first.stop_time : second.stop_time;
  s.stop_second = first_is_one ? second.stop_time : first.stop_time;
  s.values = evaluate_on(first.atlas.then(second.atlas), ts.points);
  s.skipped_points = first.skipped_points + second.skipped_points;
  return s;
}

/// Factors of the density of the ordered pair with respect to independent
/// SLE paths to infinity, as seen from one of the two orders.
struct CommutationWeight {
  double h1_prime_at_U2 = 0.0;
  double h2_prime_at_U1 = 0.0;
  double endpoint_gap = 0.0;  // |g(z_2) - g(z_1)|
  double phi_ratio = 0.0;
  double loop_term = 1.0;     // exp(c/2 m), identically 1 at zero central charge
  double gap_exponent = 0.0;
  bool disjoint = true;       // pairs whose curves meet carry no weight

  double assembled(double b, double x_gap) const {
    if (!disjoint) return 0.0;
    return std::pow(h1_prime_at_U2, b) * std::pow(h2_prime_at_U1, b) * loop_term *
           std::pow(endpoint_gap / x_gap, gap_exponent) * phi_ratio;
  }
};

/// Both perspectives on one independent pair.
struct IndependentPair {
  CommutationWeight first_view;   // h2 o g^1
  CommutationWeight second_view;  // h1 o g^2
  int overlap_points = 0;  // traced points of one curve inside the other's hull
  double capacity_first_view = 0.0;
  double capacity_second_view = 0.0;
  std::vector<Complex> values_first_view;
  std::vector<Complex> values_second_view;
};

namespace detail {

// Rezips the image under `outer` of the curve traced by `inner`. Returns
// the number of traced points that fell inside the hull of `outer`.
inline int rezip_image(const MapAtlas& inner, const MapAtlas& outer, MapAtlas& result) {
  CurveZipper zipper(inner.a());
  int inside = 0;
  for (std::size_t k = 1; k <= inner.size(); ++k) {
    const Complex tip = tip_point(inner, k);
    if (!(tip.imag() > 0.0)) continue;
    try {
      zipper.add_point(evaluate_g(outer, tip));
    } catch (const SwallowedPointError&) {
      ++inside;
    }
  }
  result = zipper.atlas();
  return inside;
}

}  // namespace detail

/// Independent SLE paths to infinity from x1 (time r1) and x2 (time r2) and
/// the commutation weight assembled from each side. The loop term is fixed to
/// 1, which is exact only at zero central charge.
inline IndependentPair independent_pair_weight(const Params& p, double x1, double x2, double r1,
                                               double r2, double dt, std::uint64_t sample_seed,
                                               const TestSet& ts) {
  if (!(r1 > 0.0 && r2 > 0.0 && r1 + r2 < 1.0)) throw DomainError("need r1, r2 > 0 and r1 + r2 < 1");
  auto n1 = stream_path(sample_seed, Stream::kFirst);
  auto n2 = stream_path(sample_seed, Stream::kSecond);
  const MapAtlas g1 = atlas_from_driving(sle_to_infinity_driving(p, r1, dt, n1, x1));
  const MapAtlas g2 = atlas_from_driving(sle_to_infinity_driving(p, r2, dt, n2, x2));
  MapAtlas h2(p.a);  // removes g^1(gamma^2)
  MapAtlas h1(p.a);  // removes g^2(gamma^1)
  const int overlap = detail::rezip_image(g2, g1, h2) + detail::rezip_image(g1, g2, h1);
  const double u1 = g1.tip_image();
  const double u2 = g2.tip_image();
  const double x_gap = std::abs(x2 - x1);

  auto g_own_side_capacity = [&](bool first) {
    return first ? g1.total_capacity() : g2.total_capacity();
  };
  auto view = [&](const MapAtlas& h_other, double u_own, const MapAtlas& h_own_side,
                  double u_other, bool first) {
    CommutationWeight w;
    const double g_own = evaluate_real(h_other, u_own);
    const double g_other = h_other.tip_image();
    w.endpoint_gap = std::abs(g_other - g_own);
    const double hp_own = evaluate_real_prime(h_other, u_own);
    const double hp_other = evaluate_real_prime(h_own_side, u_other);
    w.h2_prime_at_U1 = first ? hp_own : hp_other;
    w.h1_prime_at_U2 = first ? hp_other : hp_own;
    // Remaining duration of the conditioned curve: total capacity a minus
    // the capacity of the union.
    const double rest = 1.0 - (g_own_side_capacity(first) + h_other.total_capacity()) / p.a;
    w.phi_ratio = first_passage_density(p, w.endpoint_gap, rest, false) /
                  first_passage_density(p, x_gap, 1.0, false);
    w.gap_exponent = -2.0 * p.b;
    w.disjoint = overlap == 0;
    return w;
  };

  IndependentPair out;
  out.overlap_points = overlap;
  out.first_view = view(h2, u1, h1, u2, true);
  out.second_view = view(h1, u2, h2, u1, false);
  out.capacity_first_view = g1.total_capacity() + h2.total_capacity();
  out.capacity_second_view = g2.total_capacity() + h1.total_capacity();
  out.values_first_view = evaluate_on(g1.then(h2), ts.points);
  out.values_second_view = evaluate_on(g2.then(h1), ts.points);
  return out;
}

}  // namespace slerev
