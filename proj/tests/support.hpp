#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace slerev::testing {

// Adaptive Gauss-Kronrod on [lo, hi].
inline double integrate(const std::function<double(double)>& f, double lo, double hi,
                        unsigned max_depth = 12) {
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, max_depth, 1e-12,
                                                                       &err);
}

// Integral over [0, inf) for integrands concentrated around `center` with
// spread `width`: Gauss-Kronrod on the bulk, exp-sinh on the tail.
inline double integrate_half_line(const std::function<double(double)>& f, double center,
                                  double width) {
  const double cut = center + 12.0 * width;
  boost::math::quadrature::exp_sinh<double> tail;
  const double far = tail.integrate([&](double u) { return f(cut + u); }, 1e-13);
  return integrate(f, 0.0, cut) + far;
}

// Cumulative distribution of a density on [0, hi] tabulated on n cells.
class TabulatedCdf {
 public:
  TabulatedCdf(const std::function<double(double)>& density, double hi, int n)
      : hi_(hi), h_(hi / n), values_(n + 1, 0.0) {
    for (int i = 0; i < n; ++i) {
      values_[i + 1] = values_[i] + integrate(density, i * h_, (i + 1) * h_, 0);
    }
  }

  double operator()(double y) const {
    if (y <= 0.0) return 0.0;
    if (y >= hi_) return values_.back();
    const double u = y / h_;
    const auto i = static_cast<std::size_t>(u);
    const double frac = u - i;
    return values_[i] + frac * (values_[i + 1] - values_[i]);
  }

  double total() const { return values_.back(); }

 private:
  double hi_;
  double h_;
  std::vector<double> values_;
};

// KS distance of a right-censored sample (censored entries are +inf)
// against a cdf, taken over the uncensored range.
inline double censored_ks(std::vector<double> sample, const std::function<double(double)>& cdf,
                          double horizon) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  std::size_t i = 0;
  for (; i < sample.size() && sample[i] <= horizon; ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  d = std::max(d, std::abs(i / n - cdf(horizon)));
  return d;
}

}  // namespace slerev::testing
