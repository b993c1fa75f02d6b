#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sloe/math.hpp"
#include "sloe/quadrature.hpp"
#include "sloe/random.hpp"
#include "sloe/state_evolution.hpp"

using namespace sloe;

namespace {

// Bisection on the increasing map t -> t + lambda g(t) over [s - lambda, s].
double prox_bisection(double lambda, double s) {
  double lo = s - lambda - 1.0, hi = s + 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid + lambda * sigmoid(mid) < s)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(Prox, MatchesBisectionOracle) {
  EXPECT_DOUBLE_EQ(prox_logistic(0.0, 1.7), 1.7);
  const double t = prox_logistic(2.0, 0.0);
  EXPECT_GT(t, -0.7);
  EXPECT_LT(t, -0.6);
  EXPECT_NEAR(t, prox_bisection(2.0, 0.0), 1e-12);

  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const double lambda = 10.0 * rng.uniform();
    const double s = 30.0 * (rng.uniform() - 0.5);
    const double p = prox_logistic(lambda, s);
    EXPECT_NEAR(p, prox_bisection(lambda, s), 1e-10);
    EXPECT_LE(std::abs(lambda * sigmoid(p) + p - s), 1e-12 * (1 + std::abs(s)));
    EXPECT_GT(p, s - lambda - 1e-12);
    EXPECT_LT(p, s + 1e-12);
  }
}

TEST(Prox, StrictlyMonotoneInS) {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const double lambda = 5.0 * rng.uniform();
    const double s1 = 20.0 * (rng.uniform() - 0.5);
    const double s2 = s1 + 1e-3 + rng.uniform();
    EXPECT_LT(prox_logistic(lambda, s1), prox_logistic(lambda, s2));
  }
}

TEST(GaussHermite, Exactness) {
  for (int order : {2, 5, 20, 60}) {
    const auto& rule = gauss_hermite(order);
    double w = 0, m2 = 0, m4 = 0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      w += rule.weights[k];
      m2 += rule.weights[k] * std::pow(rule.nodes[k], 2);
      m4 += rule.weights[k] * std::pow(rule.nodes[k], 4);
    }
    EXPECT_NEAR(w, 1.0, 1e-12);
    EXPECT_NEAR(m2, 1.0, 1e-10);
    if (order >= 3) EXPECT_NEAR(m4, 3.0, 1e-9);
  }
  EXPECT_THROW(gauss_hermite(1), Error);
}

TEST(Bivariate, MomentsAndSymmetry) {
  const BivariateGaussianSpec spec{2.0, 3.0, -1.2};
  EXPECT_NEAR(expect_bivariate([](double, double) { return 1.0; }, spec, 30), 1.0, 1e-12);
  EXPECT_NEAR(expect_bivariate([](double a, double) { return a * a; }, spec, 30), 2.0, 1e-10);
  EXPECT_NEAR(expect_bivariate([](double, double b) { return b * b; }, spec, 30), 3.0, 1e-10);
  EXPECT_NEAR(expect_bivariate([](double a, double b) { return a * b; }, spec, 30), -1.2, 1e-10);
  EXPECT_NEAR(expect_bivariate([](double a, double) { return sigmoid(a); }, spec, 60), 0.5, 1e-10);
  // Rank-one and zero-variance laws.
  const BivariateGaussianSpec rank_one{1.0, 4.0, -2.0};
  EXPECT_NEAR(expect_bivariate([](double a, double b) { return (2 * a + b) * (2 * a + b); }, rank_one, 20),
              0.0, 1e-10);
  const BivariateGaussianSpec first_zero{0.0, 2.0, 0.0};
  EXPECT_NEAR(expect_bivariate([](double a, double b) { return a * a + b * b; }, first_zero, 20), 2.0, 1e-10);
  EXPECT_THROW(checked_bivariate(1.0, 1.0, 2.0), Error);
}

TEST(Bivariate, MatchesMonteCarloForSmoothFunction) {
  const BivariateGaussianSpec spec{1.5, 0.8, 0.4};
  auto f = [](double a, double b) { return sigmoid(a) * std::cos(b); };
  const double quad = expect_bivariate(f, spec, 60);
  Rng rng(12);
  const double a = std::sqrt(1.5), b = 0.4 / a, c = std::sqrt(0.8 - b * b);
  double mc = 0.0;
  const int m = 400000;
  for (int i = 0; i < m; ++i) {
    const double z1 = rng.normal(), z2 = rng.normal();
    mc += f(a * z1, b * z1 + c * z2);
  }
  EXPECT_NEAR(quad, mc / m, 0.004);
}

TEST(SolveGamma, ResidualsAndIdentity) {
  for (double kappa : {0.05, 0.1, 0.2, 0.3}) {
    for (double g2 : {0.5, 1.0, 5.0}) {
      SolverOptions opts;
      if (!opts.table().inside(kappa, std::sqrt(g2), opts.existence_margin)) continue;
      const CorrectionParams p = solve_gamma(kappa, std::sqrt(g2), opts);
      // Independent residual evaluation at a higher quadrature order.
      const Eigen::Vector3d r = state_residuals(kappa, p.alpha, p.sigma_star, p.lambda, g2, 60);
      EXPECT_LE(r.lpNorm<Eigen::Infinity>(), 1e-9) << kappa << " " << g2;
      EXPECT_NEAR(p.eta_sq, p.alpha * p.alpha * g2 + kappa * p.sigma_star * p.sigma_star, 1e-12);
      EXPECT_GT(p.alpha, 1.0);
      EXPECT_GT(p.sigma_star, 0.0);
      EXPECT_GT(p.lambda, 0.0);
    }
  }
}

TEST(SolveGamma, ClassicalLimit) {
  const CorrectionParams p = solve_gamma(1e-3, 1.0);
  EXPECT_GE(p.alpha, 1.0);
  EXPECT_LE(p.alpha, 1.02);
}

TEST(SolveGamma, AlphaIncreasesWithKappa) {
  const double a1 = solve_gamma(0.05, 1.0).alpha;
  const double a2 = solve_gamma(0.1, 1.0).alpha;
  const double a3 = solve_gamma(0.2, 1.0).alpha;
  EXPECT_LT(a1, a2);
  EXPECT_LT(a2, a3);
}

TEST(SolveGamma, OutsideExistenceRegion) {
  try {
    solve_gamma(0.6, 3.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutsideExistenceRegion);
    EXPECT_EQ(e.category(), ErrorCategory::Numerical);
  }
  EXPECT_THROW(solve_gamma(1.0, 1.0), Error);
  EXPECT_THROW(solve_gamma(0.1, 0.0), Error);
}

TEST(SolveEta, RoundTripRecoversParameters) {
  for (double kappa : {0.05, 0.15, 0.3}) {
    for (double g2 : {0.5, 1.0, 5.0}) {
      SolverOptions opts;
      if (!opts.table().inside(kappa, std::sqrt(g2), opts.existence_margin)) continue;
      const CorrectionParams fwd = solve_gamma(kappa, std::sqrt(g2), opts);
      const CorrectionParams back = solve_eta(kappa, std::sqrt(fwd.eta_sq), opts);
      EXPECT_LE(rel(back.alpha, fwd.alpha), 1e-6) << kappa << " " << g2;
      EXPECT_LE(rel(back.sigma_star, fwd.sigma_star), 1e-6);
      EXPECT_LE(rel(back.lambda, fwd.lambda), 1e-6);
      EXPECT_LE(rel(back.gamma_sq, g2), 1e-6);
      EXPECT_LE(back.residual_norm, 1e-9);
    }
  }
}

TEST(SolveEta, FloorBelowSignal) {
  const NullSolution null = solve_null(0.2);
  EXPECT_NEAR(null.eta_sq_floor, 0.2 * null.sigma_star * null.sigma_star, 1e-15);
  // Residuals of the two active equations at gamma = 0.
  const Eigen::Vector3d r = state_residuals(0.2, 1.0, null.sigma_star, null.lambda, 0.0, 60);
  EXPECT_LE(std::abs(r[0]), 1e-9);
  EXPECT_LE(std::abs(r[2]), 1e-9);
  try {
    solve_eta(0.2, std::sqrt(0.5 * null.eta_sq_floor));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentEta);
  }
  // Small signals approach the floor continuously.
  const CorrectionParams weak = solve_gamma(0.2, 0.05);
  EXPECT_GT(weak.eta_sq, null.eta_sq_floor);
  EXPECT_NEAR(weak.sigma_star, null.sigma_star, 0.05 * null.sigma_star);
}

TEST(SolutionCache, CsvRoundTripAndHits) {
  SolutionCache cache;
  const CorrectionParams a = solve_gamma_cached(cache, 0.1, 1.0);
  EXPECT_EQ(cache.size(), 1u);
  const CorrectionParams b = solve_gamma_cached(cache, 0.1, 1.0);
  EXPECT_EQ(a.alpha, b.alpha);
  solve_eta_cached(cache, 0.1, std::sqrt(a.eta_sq));
  EXPECT_EQ(cache.size(), 2u);

  std::stringstream csv;
  cache.write_csv(csv);
  const SolutionCache loaded = SolutionCache::read_csv(csv);
  EXPECT_EQ(loaded.size(), 2u);
  const auto hit = loaded.find('g', 0.1, 1.0, 60);
  ASSERT_TRUE(hit.has_value());
  EXPECT_EQ(hit->alpha, a.alpha);
  EXPECT_EQ(hit->sigma_star, a.sigma_star);

  std::stringstream stale("# sloe-solution-cache version=0\nmode,kappa\ng,0.1,1,60,1,1,1,1,1,0\n");
  EXPECT_EQ(SolutionCache::read_csv(stale).size(), 0u);
}
