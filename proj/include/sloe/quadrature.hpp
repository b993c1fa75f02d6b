#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <type_traits>
#include <vector>

#include "sloe/error.hpp"

namespace sloe {

/// Nodes and weights integrating against the standard normal density:
/// sum_k w_k f(x_k) ~ E[f(Z)], Z ~ N(0,1), exact for polynomials of degree
/// below 2 * order.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Roots of the physicists' Hermite polynomial H_order by Newton iteration
// on the orthonormal recurrence, then mapped to the N(0,1) weight.
inline GaussHermiteRule compute_gauss_hermite(int order) {
  const int m = (order + 1) / 2;
  std::vector<double> x(static_cast<std::size_t>(order));
  std::vector<double> w(static_cast<std::size_t>(order));
  const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * order + 1.0) - 1.85575 * std::pow(2.0 * order + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(order), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[static_cast<std::size_t>(i - 2)];
    }
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < order; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * order) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[static_cast<std::size_t>(i)] = z;
    x[static_cast<std::size_t>(order - 1 - i)] = -z;
    w[static_cast<std::size_t>(i)] = 2.0 / (pp * pp);
    w[static_cast<std::size_t>(order - 1 - i)] = w[static_cast<std::size_t>(i)];
  }
  GaussHermiteRule rule;
  rule.nodes.resize(static_cast<std::size_t>(order));
  rule.weights.resize(static_cast<std::size_t>(order));
  double total = 0.0;
  for (int k = 0; k < order; ++k) {
    // Ascending node order.
    const auto src = static_cast<std::size_t>(order - 1 - k);
    rule.nodes[static_cast<std::size_t>(k)] = std::numbers::sqrt2 * x[src];
    rule.weights[static_cast<std::size_t>(k)] = w[src] / std::sqrt(std::numbers::pi);
    total += rule.weights[static_cast<std::size_t>(k)];
  }
  for (double& wk : rule.weights) wk /= total;
  return rule;
}

}  // namespace detail

/// Cached rule of the requested order (thread-safe).
inline const GaussHermiteRule& gauss_hermite(int order) {
  require(order >= 2 && order <= 400, "gauss_hermite: order must be in [2, 400]");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(detail::compute_gauss_hermite(order));
  return *slot;
}

/// Mean-zero bivariate normal law of (Q1, Q2).
struct BivariateGaussianSpec {
  double var1 = 1.0;
  double var2 = 1.0;
  double cov = 0.0;
};

inline BivariateGaussianSpec checked_bivariate(double var1, double var2, double cov) {
  const double slack = 1e-12 * std::max(1.0, var1 * var2);
  if (!(var1 >= 0.0) || !(var2 >= 0.0) || !(cov * cov <= var1 * var2 + slack))
    throw Error(ErrorCode::NonPsdCovariance, "bivariate covariance is not positive semidefinite");
  return {var1, var2, cov};
}

/// E[f(Q1, Q2)] by tensor Gauss-Hermite quadrature after a Cholesky
/// transform Q1 = a Z1, Q2 = b Z1 + c Z2. Rank-one laws use the 1-D rule
/// along the support direction.
template <class F>
auto expect_bivariate(F&& f, const BivariateGaussianSpec& spec, int order) {
  using Result = std::decay_t<std::invoke_result_t<F&, double, double>>;
  checked_bivariate(spec.var1, spec.var2, spec.cov);
  const GaussHermiteRule& rule = gauss_hermite(order);
  const auto k = rule.nodes.size();

  double a = 0.0, b = 0.0, c = 0.0;
  if (spec.var1 > 0.0) {
    a = std::sqrt(spec.var1);
    b = spec.cov / a;
    const double rem = spec.var2 - b * b;
    c = rem > 1e-14 * spec.var2 ? std::sqrt(rem) : 0.0;
  } else {
    c = std::sqrt(spec.var2);
  }

  auto zero = [] {
    if constexpr (std::is_arithmetic_v<Result>) return Result{0};
    else return Result(Result::Zero());
  };
  Result total = zero();
  if (a == 0.0 || c == 0.0) {
    // One Gaussian direction (or none).
    for (std::size_t i = 0; i < k; ++i) {
      const double z = rule.nodes[i];
      total += rule.weights[i] * (a == 0.0 ? f(0.0, c * z) : f(a * z, b * z));
    }
    return total;
  }
  for (std::size_t i = 0; i < k; ++i) {
    const double q1 = a * rule.nodes[i];
    const double base = b * rule.nodes[i];
    Result inner = zero();
    for (std::size_t j = 0; j < k; ++j) inner += rule.weights[j] * f(q1, base + c * rule.nodes[j]);
    total += rule.weights[i] * inner;
  }
  return total;
}

}  // namespace sloe
