#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "sloe/error.hpp"

namespace sloe {

/// Logistic link g(t) = 1 / (1 + exp(-t)), evaluated without overflow.
inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// g'(t) = g(t)(1 - g(t)), computed from exp(-|t|) so the tails keep
/// relative precision.
inline double sigmoid_deriv(double t) {
  const double e = std::exp(-std::abs(t));
  const double denom = 1.0 + e;
  return e / (denom * denom);
}

/// log(1 + exp(t)), the antiderivative G of the logistic link.
inline double log1pexp(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

/// Two-sided Wald p-value 2(1 - Phi(|z|)).
inline double two_sided_p_value(double z) {
  return std::clamp(std::erfc(std::abs(z) / std::numbers::sqrt2), 0.0, 1.0);
}

/// Linear-interpolation quantile of sorted data (type 7).
inline double sorted_quantile(std::span<const double> sorted, double prob) {
  require(!sorted.empty(), "sorted_quantile: empty sample");
  if (sorted.size() == 1) return sorted.front();
  const double h = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> values) {
  require(!values.empty(), "median: empty sample");
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, 0.5);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// One-sample Kolmogorov-Smirnov test against Uniform(0,1). The p-value
/// uses the Kolmogorov limit with Stephens' finite-n correction.
inline KsResult ks_uniform(std::vector<double> sample) {
  require(!sample.empty(), "ks_uniform: empty sample");
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double u = std::clamp(sample[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - u,
                  u - static_cast<double>(i) / n});
  }
  const double sqrt_n = std::sqrt(n);
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  double p = 0.0;
  if (lambda < 0.2) {
    p = 1.0;
  } else {
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
      const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
      p += term;
      if (std::abs(term) < 1e-16) break;
      sign = -sign;
    }
    p = std::clamp(2.0 * p, 0.0, 1.0);
  }
  return {d, p, sample.size()};
}

}  // namespace sloe
