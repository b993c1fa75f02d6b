#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sloe/generators.hpp"
#include "sloe/logistic_mle.hpp"
#include "sloe/separability.hpp"
#include "test_support.hpp"

using namespace sloe;
using sloe::testing::simulated;

namespace {

// Plain gradient ascent with the fixed step 4 / lambda_max(X'X), which is
// monotone for the logistic log-likelihood.
VectorXd gradient_ascent(const MatrixXd& x, const VectorXd& y) {
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(x.transpose() * x);
  const double step = 4.0 / es.eigenvalues().maxCoeff();
  VectorXd b = VectorXd::Zero(x.cols());
  for (int it = 0; it < 2000000; ++it) {
    const VectorXd t = x * b;
    VectorXd r(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) r[i] = y[i] - 1.0 / (1.0 + std::exp(-t[i]));
    const VectorXd g = x.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < 1e-11) break;
    b += step * g;
  }
  return b;
}

MatrixXd dense_curvature(const MatrixXd& x, const VectorXd& beta) {
  MatrixXd a = MatrixXd::Zero(x.cols(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-x.row(i).dot(beta)));
    a += p * (1.0 - p) * x.row(i).transpose() * x.row(i);
  }
  return a;
}

// Separability oracle for d = 2: the cone {b : Zb >= 0} is an
// intersection of half-planes, so it is enough to try its boundary rays
// (perpendicular to some z_i), the bisectors of pairs of those rays, and the
// rows z_i themselves (the interior of a single half-plane).
bool separable_2d(const MatrixXd& z) {
  auto qualifies = [&](const Eigen::Vector2d& b) {
    bool some_positive = false;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double v = z(i, 0) * b[0] + z(i, 1) * b[1];
      if (v < -1e-12) return false;
      if (v > 1e-12) some_positive = true;
    }
    return some_positive;
  };
  std::vector<Eigen::Vector2d> rays, candidates;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::Vector2d zi(z(i, 0), z(i, 1));
    if (zi.norm() == 0.0) continue;
    const Eigen::Vector2d perp = Eigen::Vector2d(-zi[1], zi[0]).normalized();
    rays.push_back(perp);
    rays.push_back(-perp);
    candidates.push_back(zi);
  }
  for (std::size_t a = 0; a < rays.size(); ++a) {
    candidates.push_back(rays[a]);
    for (std::size_t b = a + 1; b < rays.size(); ++b) candidates.push_back(rays[a] + rays[b]);
  }
  for (const auto& c : candidates)
    if (qualifies(c)) return true;
  return false;
}

}  // namespace

TEST(Mle, SymmetricFourPointExample) {
  MatrixXd x(4, 1);
  x << 1, 1, -1, -1;
  VectorXd y(4);
  y << 1, 0, 1, 0;
  const MleFit fit = fit_mle(Dataset(x, y));
  EXPECT_TRUE(fit.converged());
  EXPECT_NEAR(fit.beta_hat()[0], 0.0, 1e-12);
  EXPECT_NEAR(fit.standard_se()[0], 1.0, 1e-12);
  EXPECT_NEAR(fit.log_likelihood(), 4.0 * std::log(0.5), 1e-12);
}

TEST(Mle, SeparableOneDimensional) {
  MatrixXd x(3, 1);
  x << 1, 2, -1;
  VectorXd y(3);
  y << 1, 1, 0;
  const Dataset data(x, y);
  EXPECT_TRUE(check_separable(data));
  try {
    fit_mle(data);
    FAIL() << "expected SeparableData";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SeparableData);
  }
}

TEST(Mle, DimensionAtLeastSupportIsSeparable) {
  const Dataset data = simulated(10, 10, 1.0, 3);
  EXPECT_THROW(fit_mle(data), Error);
}

TEST(Mle, MatchesGradientAscentOracle) {
  const Dataset data = simulated(200, 5, 1.0, 11);
  const MleFit fit = fit_mle(data);
  ASSERT_TRUE(fit.converged());
  const VectorXd oracle = gradient_ascent(data.features(), data.outcomes());
  EXPECT_LE((fit.beta_hat() - oracle).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LE(fit.grad_norm(), 1e-8);
}

TEST(Mle, FactorizationMatchesDenseInverse) {
  const Dataset data = simulated(300, 12, 2.0, 21);
  const MleFit fit = fit_mle(data);
  const MatrixXd inv = dense_curvature(data.features(), fit.beta_hat()).inverse();
  const VectorXd se = inv.diagonal().cwiseSqrt();
  EXPECT_LE((fit.standard_se() - se).cwiseAbs().maxCoeff(), 1e-10);
  const MatrixXd probe = data.features().topRows(5);
  const VectorXd q = fit.quadratic_forms(probe);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const VectorXd v = probe.row(i).transpose();
    EXPECT_NEAR(q[i], v.dot(inv * v), 1e-10 * (1 + q[i]));
    EXPECT_NEAR(fit.quadratic_form(v), q[i], 1e-12 * (1 + q[i]));
  }
}

TEST(Mle, ScaleEquivariance) {
  const Dataset data = simulated(250, 6, 1.0, 5);
  const MleFit a = fit_mle(data);
  const double c = 3.5;
  const MleFit b = fit_mle(Dataset(c * data.features(), data.outcomes()));
  EXPECT_LE((b.beta_hat() * c - a.beta_hat()).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LE((b.logits() - a.logits()).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Mle, ZeroWeightEqualsRowRemovalAndTwoEqualsDuplicate) {
  const Dataset data = simulated(120, 4, 1.0, 8);
  VectorXd w = VectorXd::Ones(120);
  w[7] = 0.0;
  w[30] = 2.0;
  FitOptions tight;
  tight.tol = 1e-11;
  const MleFit weighted = fit_logistic(data.features(), data.outcomes(), &w, tight);

  MatrixXd x(120, 4);
  VectorXd y(120);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < 120; ++i) {
    if (i == 7) continue;
    x.row(k) = data.features().row(i);
    y[k++] = data.outcomes()[i];
  }
  x.row(k) = data.features().row(30);
  y[k++] = data.outcomes()[30];
  ASSERT_EQ(k, 120);
  const MleFit expanded = fit_logistic(x, y, nullptr, tight);
  EXPECT_LE((weighted.beta_hat() - expanded.beta_hat()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mle, WarmStartReachesSameOptimum) {
  const Dataset data = simulated(400, 40, 1.0, 13);
  const MleFit cold = fit_mle(data);
  const VectorXd start = cold.beta_hat() * 0.9;
  const MleFit warm = fit_mle(data, {}, &start);
  EXPECT_LE((warm.beta_hat() - cold.beta_hat()).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LE(warm.iterations(), cold.iterations());
}

TEST(Separability, LpAgreesWithBruteForceInTwoDimensions) {
  Rng rng(404);
  int separable = 0, not_separable = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng.below(12));
    MatrixXd x(n, 2);
    VectorXd y(n);
    const bool degenerate = trial % 10 == 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // Occasionally use lattice points so ties and collinear rows appear.
      x(i, 0) = degenerate ? static_cast<double>(rng.below(3)) - 1.0 : rng.normal();
      x(i, 1) = degenerate ? static_cast<double>(rng.below(3)) - 1.0 : rng.normal();
      y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    MatrixXd z(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) z.row(i) = (y[i] > 0.5 ? 1.0 : -1.0) * x.row(i);
    const bool expected = separable_2d(z);
    EXPECT_EQ(separability_lp(x, y).separable, expected) << "trial " << trial;
    (expected ? separable : not_separable) += 1;
  }
  EXPECT_GT(separable, 20);
  EXPECT_GT(not_separable, 20);
}

TEST(Separability, FitOutcomeAgreesWithLp) {
  // Either the fit converges or it reports SeparableData, in agreement with
  // the LP decision.
  int separable_seen = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = 40;
    const Eigen::Index d = 8 + trial % 12;
    const Dataset data = simulated(n, d, 1.0 + trial % 3, 500 + trial);
    const bool lp = check_separable(data);
    bool fit_separable = false;
    try {
      const MleFit fit = fit_mle(data);
      EXPECT_TRUE(fit.converged());
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::SeparableData);
      fit_separable = true;
    }
    EXPECT_EQ(lp, fit_separable) << "trial " << trial;
    separable_seen += lp;
  }
  EXPECT_GT(separable_seen, 0);
  EXPECT_LT(separable_seen, 40);
}

TEST(Separability, WeightsRestrictTheSupport) {
  MatrixXd x(4, 1);
  x << 1, 2, -1, 0.5;
  VectorXd y(4);
  y << 1, 1, 0, 0;  // the last row breaks separation
  EXPECT_FALSE(separability_lp(x, y).separable);
  VectorXd w(4);
  w << 1, 1, 1, 0;
  EXPECT_TRUE(separability_lp(x, y, &w).separable);
}
