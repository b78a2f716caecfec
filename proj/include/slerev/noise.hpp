#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace slerev {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based seed split: the seed of (stream, index) does not depend on
/// how many other streams or indices are in use.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(master ^ 0x5EEDULL);
  h = splitmix64(h ^ (stream * 0xD1B54A32D192ED03ULL));
  return splitmix64(h ^ (index * 0x8CB92BA72F3D8DD7ULL));
}

/// Standard normal keyed by a 64-bit counter (Box-Muller, cosine branch).
inline double keyed_normal(std::uint64_t key) {
  const std::uint64_t h1 = splitmix64(key);
  const std::uint64_t h2 = splitmix64(h1 ^ 0x2545F4914F6CDD1DULL);
  // 53-bit uniforms in (0,1] and [0,1)
  const double u1 = (static_cast<double>(h1 >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// A Brownian path W on [0, inf) realized lazily by the dyadic Levy midpoint
/// construction. The value at every dyadic time is a pure function of the
/// seed, so refining a time grid (e.g. halving the step) queries the same
/// path. Queries are cheapest when they move forward in time.
class BrownianPath {
 public:
  static constexpr int kMaxLevel = 50;

  explicit BrownianPath(std::uint64_t seed) : seed_(seed) { integer_values_.push_back(0.0); }

  std::uint64_t seed() const { return seed_; }

  double operator()(double t) {
    if (t <= 0.0) return 0.0;
    const double fl = std::floor(t);
    const auto unit = static_cast<std::uint64_t>(fl);
    extend_integers(unit + 1);
    if (t == fl) return integer_values_[unit];
    if (stack_.empty() || unit != stack_unit_) {
      stack_.clear();
      stack_unit_ = unit;
      stack_.push_back(Node{fl, fl + 1.0, integer_values_[unit], integer_values_[unit + 1], 0, 0});
    }
    while (stack_.size() > 1 && !(t >= stack_.back().left && t <= stack_.back().right)) {
      stack_.pop_back();
    }
    for (;;) {
      const Node& node = stack_.back();
      if (t == node.left) return node.w_left;
      if (t == node.right) return node.w_right;
      if (node.level >= kMaxLevel) {
        const double frac = (t - node.left) / (node.right - node.left);
        return node.w_left + frac * (node.w_right - node.w_left);
      }
      const double mid = 0.5 * (node.left + node.right);
      const int level = node.level + 1;
      const std::uint64_t child = 2 * node.index;
      const double sd = std::sqrt(0.25 * (node.right - node.left));
      const double w_mid =
          0.5 * (node.w_left + node.w_right) + sd * keyed_normal(key(unit, level, child));
      if (t < mid) {
        stack_.push_back(Node{node.left, mid, node.w_left, w_mid, level, child});
      } else {
        stack_.push_back(Node{mid, node.right, w_mid, node.w_right, level, child + 1});
      }
    }
  }

  /// Auxiliary engine for non-Brownian draws tied to this path.
  std::mt19937_64 aux_engine(std::uint64_t tag) const {
    return std::mt19937_64(derive_seed(seed_, 0xA11CEULL, tag));
  }

 private:
  struct Node {
    double left, right, w_left, w_right;
    int level;
    std::uint64_t index;
  };

  std::uint64_t key(std::uint64_t unit, int level, std::uint64_t index) const {
    std::uint64_t h = splitmix64(seed_ ^ (unit * 0x9E3779B97F4A7C15ULL));
    h = splitmix64(h ^ static_cast<std::uint64_t>(level));
    return h ^ (index * 0xC2B2AE3D27D4EB4FULL);
  }

  void extend_integers(std::uint64_t n) {
    while (integer_values_.size() <= n) {
      const std::uint64_t i = integer_values_.size() - 1;
      integer_values_.push_back(integer_values_.back() + keyed_normal(key(i, 0, 0)));
    }
  }

  std::uint64_t seed_;
  std::vector<double> integer_values_;
  std::vector<Node> stack_;
  std::uint64_t stack_unit_ = 0;
};

/// Largest power of two not exceeding h (h > 0).
inline double dyadic_floor(double h) {
  int e = 0;
  std::frexp(h, &e);
  double p = std::ldexp(1.0, e - 1);
  return p > h ? 0.5 * p : p;
}

/// The next point strictly after t on the grid of spacing h (a power of two).
inline double next_grid_point(double t, double h) {
  double n = std::floor(t / h) + 1.0;
  double next = n * h;
  if (next <= t) next += h;
  return next;
}

}  // namespace slerev
