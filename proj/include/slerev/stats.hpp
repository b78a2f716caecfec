#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "slerev/noise.hpp"
#include "slerev/sampler.hpp"

namespace slerev {

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

inline MeanEstimate mean_with_error(std::span<const double> v) {
  MeanEstimate m;
  m.count = v.size();
  if (v.empty()) return m;
  const double n = static_cast<double>(v.size());
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return m;
}

/// Survival function of the Kolmogorov distribution, P(K > lambda).
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k < 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// sup_x |F_n(x) - F(x)| for a sample against a continuous cdf.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

/// Flattens a map sample to (Re, Im) per test point.
inline std::vector<double> flatten(const MapSample& s) {
  std::vector<double> out;
  out.reserve(2 * s.values.size());
  for (const auto& z : s.values) {
    out.push_back(z.real());
    out.push_back(z.imag());
  }
  return out;
}

inline std::vector<std::vector<double>> flatten_batch(std::span<const MapSample> batch) {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(flatten(s));
  return out;
}

struct EnergyTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int permutations = 0;
  bool degenerate = false;  // all vectors identical; p forced to 1
};

namespace detail {

inline double euclid(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = u[k] - v[k];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

/// Energy-distance two-sample test with a permutation p-value.
///
/// The statistic is nm/(n+m) [2 E|X-Y| - E|X-X'| - E|Y-Y'|] (V-statistic).
/// The p-value is (1 + #{permuted >= observed}) / (1 + permutations), with
/// permutation k shuffled by a generator seeded from (seed, k).
inline EnergyTestResult energy_two_sample_test(const std::vector<std::vector<double>>& A,
                                               const std::vector<std::vector<double>>& B,
                                               int permutations, std::uint64_t seed) {
  if (A.empty() || B.empty()) throw std::invalid_argument("energy test: empty batch");
  const std::size_t dim = A.front().size();
  for (const auto& v : A) if (v.size() != dim) throw std::invalid_argument("energy test: dimension mismatch");
  for (const auto& v : B) if (v.size() != dim) throw std::invalid_argument("energy test: dimension mismatch");

  const std::size_t n = A.size();
  const std::size_t m = B.size();
  const std::size_t total = n + m;
  std::vector<const std::vector<double>*> pooled;
  pooled.reserve(total);
  for (const auto& v : A) pooled.push_back(&v);
  for (const auto& v : B) pooled.push_back(&v);

  EnergyTestResult res;
  res.permutations = permutations;
  const bool all_same = std::all_of(pooled.begin(), pooled.end(),
                                    [&](const auto* v) { return *v == *pooled.front(); });
  if (all_same) {
    res.degenerate = true;
    return res;
  }

  // Observed statistic in double, with identical loop shapes for the three
  // sums so that identical batches give exactly 0.
  auto block_sum = [&](const std::vector<std::vector<double>>& U,
                       const std::vector<std::vector<double>>& V) {
    double s = 0.0;
    for (const auto& u : U) {
      double row = 0.0;
      for (const auto& v : V) row += detail::euclid(u, v);
      s += row;
    }
    return s;
  };
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  const double scale = dn * dm / (dn + dm);
  const double s_ab = block_sum(A, B);
  const double s_aa = block_sum(A, A);
  const double s_bb = block_sum(B, B);
  res.statistic = scale * (2.0 * s_ab / (dn * dm) - s_aa / (dn * dn) - s_bb / (dm * dm));

  // Pooled distance matrix (float) for the permutation loop.
  std::vector<float> dist(total * total);
  std::vector<double> row_sum(total, 0.0);
  for (std::size_t i = 0; i < total; ++i) {
    dist[i * total + i] = 0.0f;
    for (std::size_t j = i + 1; j < total; ++j) {
      const float d = static_cast<float>(detail::euclid(*pooled[i], *pooled[j]));
      dist[i * total + j] = d;
      dist[j * total + i] = d;
    }
  }
  double s_total = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < total; ++j) r += dist[i * total + j];
    row_sum[i] = r;
    s_total += r;
  }
  const double mean_distance = s_total / (static_cast<double>(total) * (total - 1));

  std::vector<std::uint32_t> order(total);
  std::vector<float> mask(total);
  auto permuted_statistic = [&](std::span<const std::uint32_t> first_group) {
    std::fill(mask.begin(), mask.end(), 0.0f);
    for (auto i : first_group) mask[i] = 1.0f;
    double s_in = 0.0;
    double lr = 0.0;
    for (auto i : first_group) {
      const float* row = &dist[static_cast<std::size_t>(i) * total];
      float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < total; ++j) acc += row[j] * mask[j];
      s_in += acc;
      lr += row_sum[i];
    }
    const double s_bb_p = s_total - 2.0 * lr + s_in;
    const double s_ab_p = lr - s_in;
    return scale * (2.0 * s_ab_p / (dn * dm) - s_in / (dn * dn) - s_bb_p / (dm * dm));
  };

  const double tol = 1e-6 * mean_distance;
  int exceed = 0;
  for (int k = 0; k < permutations; ++k) {
    std::iota(order.begin(), order.end(), 0u);
    std::mt19937_64 rng(derive_seed(seed, 0xE4E2ULL, static_cast<std::uint64_t>(k)));
    std::shuffle(order.begin(), order.end(), rng);
    const double stat = permuted_statistic(std::span(order).first(n));
    if (stat >= res.statistic - tol) ++exceed;
  }
  res.p_value = (1.0 + exceed) / (1.0 + permutations);
  return res;
}

inline EnergyTestResult energy_two_sample_test(std::span<const MapSample> A,
                                               std::span<const MapSample> B, int permutations,
                                               std::uint64_t seed) {
  return energy_two_sample_test(flatten_batch(A), flatten_batch(B), permutations, seed);
}

/// Weighted least squares y ~ X beta with weights 1/var. The covariance is
/// inflated by the reduced chi-square when that exceeds one.
struct LinearFit {
  std::vector<double> coef;
  std::vector<double> std_error;
  double reduced_chi2 = 0.0;
  std::size_t points = 0;
};

inline LinearFit weighted_least_squares(const std::vector<std::vector<double>>& X,
                                        std::span<const double> y, std::span<const double> var) {
  const std::size_t n = X.size();
  if (n == 0) throw std::invalid_argument("weighted_least_squares: no data");
  const std::size_t k = X.front().size();
  if (n < k) throw std::invalid_argument("weighted_least_squares: underdetermined fit");
  // Normal equations, solved by Gauss-Jordan on the augmented inverse.
  std::vector<std::vector<double>> A(k, std::vector<double>(2 * k, 0.0));
  std::vector<double> rhs(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / var[i];
    for (std::size_t r = 0; r < k; ++r) {
      rhs[r] += w * X[i][r] * y[i];
      for (std::size_t c = 0; c < k; ++c) A[r][c] += w * X[i][r] * X[i][c];
    }
  }
  for (std::size_t r = 0; r < k; ++r) A[r][k + r] = 1.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r) if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    if (A[c][c] == 0.0) throw std::runtime_error("weighted_least_squares: singular design");
    const double d = A[c][c];
    for (auto& v : A[c]) v /= d;
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const double f = A[r][c];
      for (std::size_t j = 0; j < 2 * k; ++j) A[r][j] -= f * A[c][j];
    }
  }
  LinearFit fit;
  fit.points = n;
  fit.coef.assign(k, 0.0);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c) fit.coef[r] += A[r][k + c] * rhs[c];
  double chi2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = 0.0;
    for (std::size_t c = 0; c < k; ++c) pred += X[i][c] * fit.coef[c];
    chi2 += (y[i] - pred) * (y[i] - pred) / var[i];
  }
  fit.reduced_chi2 = n > k ? chi2 / static_cast<double>(n - k) : 0.0;
  const double inflate = std::max(1.0, fit.reduced_chi2);
  fit.std_error.resize(k);
  for (std::size_t r = 0; r < k; ++r) fit.std_error[r] = std::sqrt(A[r][k + r] * inflate);
  return fit;
}

/// Empirical survival P(V >= threshold) with its binomial standard error.
struct SurvivalPoint {
  double threshold = 0.0;
  double survival = 0.0;
  double std_error = 0.0;
  std::size_t hits = 0;
};

inline std::vector<SurvivalPoint> survival_curve(std::span<const double> values,
                                                 std::span<const double> thresholds) {
  std::vector<SurvivalPoint> out;
  const double n = static_cast<double>(values.size());
  for (double th : thresholds) {
    SurvivalPoint sp;
    sp.threshold = th;
    sp.hits = static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [th](double v) { return v >= th; }));
    sp.survival = sp.hits / n;
    sp.std_error = std::sqrt(sp.survival * (1.0 - sp.survival) / n);
    out.push_back(sp);
  }
  return out;
}

/// Fit of log S against a covariate; points need at least `min_hits` events.
/// Var(log S) is approximated by (1 - S)/(n S).
struct LogSurvivalFit {
  LinearFit fit;
  std::vector<double> covariate;
  std::vector<double> log_survival;
};

inline LogSurvivalFit fit_log_survival(std::span<const SurvivalPoint> curve,
                                       std::span<const double> covariate, std::size_t n,
                                       bool quadratic = false, std::size_t min_hits = 10) {
  LogSurvivalFit out;
  std::vector<std::vector<double>> X;
  std::vector<double> y, var;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto& sp = curve[i];
    if (sp.hits < min_hits || sp.hits == n) continue;
    const double c = covariate[i];
    if (quadratic) X.push_back({1.0, c, c * c});
    else X.push_back({1.0, c});
    y.push_back(std::log(sp.survival));
    var.push_back((1.0 - sp.survival) / (static_cast<double>(n) * sp.survival));
    out.covariate.push_back(c);
    out.log_survival.push_back(y.back());
  }
  const std::size_t need = quadratic ? 4 : 3;
  if (y.size() < need) throw std::runtime_error("fit_log_survival: too few usable thresholds");
  out.fit = weighted_least_squares(X, y, var);
  return out;
}

inline constexpr double kZ95 = 1.959963984540054;

}  // namespace slerev
