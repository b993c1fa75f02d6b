#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "sloe/inference.hpp"
#include "sloe/sloe.hpp"
#include "sloe/state_evolution.hpp"
#include "test_support.hpp"

using namespace sloe;
using sloe::testing::simulated;

namespace {

Dataset four_point() {
  MatrixXd x(4, 1);
  x << 1, 1, -1, -1;
  VectorXd y(4);
  y << 1, 0, 1, 0;
  return Dataset(x, y);
}

CorrectionParams manual_params(double kappa, double alpha, double sigma_star) {
  CorrectionParams p;
  p.kappa = kappa;
  p.alpha = alpha;
  p.sigma_star = sigma_star;
  p.lambda = 1.0;
  return p;
}

// Brute-force BH: the largest k such that at least k p-values are <= qk/m,
// selecting every p-value at or below that threshold.
std::vector<std::size_t> bh_oracle(const std::vector<double>& p, double q) {
  const std::size_t m = p.size();
  std::size_t best = 0;
  for (std::size_t k = 1; k <= m; ++k) {
    const double thr = q * static_cast<double>(k) / static_cast<double>(m);
    const auto count = static_cast<std::size_t>(std::count_if(p.begin(), p.end(), [&](double v) { return v <= thr; }));
    if (count >= k) best = k;
  }
  std::vector<std::size_t> out;
  if (best == 0) return out;
  // Rank by (p, index) and keep the first `best`.
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return p[a] < p[b] || (p[a] == p[b] && a < b);
  });
  out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(best));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Classical, FourPointClosedForm) {
  const MleFit fit = fit_mle(four_point());
  const InferenceReport r = classical_inference(fit, 0.9);
  ASSERT_EQ(r.coefficients.size(), 1u);
  EXPECT_NEAR(r.coefficients[0].ci_lo, -1.6448536269514722, 1e-9);
  EXPECT_NEAR(r.coefficients[0].ci_hi, 1.6448536269514722, 1e-9);
  EXPECT_NEAR(r.coefficients[0].p_value, 1.0, 1e-9);
  EXPECT_EQ(r.coefficients[0].name, "x0");
}

TEST(Corrected, ZeroCoefficientHasUnitPValue) {
  const MleFit fit = fit_mle(four_point());
  const InferenceReport r = coefficient_inference(fit, manual_params(0.25, 1.3, 2.0), 0.9);
  const auto& c = r.coefficients[0];
  EXPECT_NEAR(c.z, 0.0, 1e-9);
  EXPECT_NEAR(c.p_value, 1.0, 1e-9);
  EXPECT_NEAR(c.ci_lo + c.ci_hi, 0.0, 1e-9);
}

TEST(Corrected, DegeneratesToClassical) {
  const Dataset data = simulated(300, 6, 1.0, 3);
  const MleFit fit = fit_mle(data);
  const InferenceReport classical = classical_inference(fit, 0.9);
  for (Eigen::Index j = 0; j < 6; ++j) {
    const double sigma = classical.coefficients[j].se * std::sqrt(300.0);
    const InferenceReport c = coefficient_inference(fit, manual_params(fit.kappa(), 1.0, sigma), 0.9);
    EXPECT_NEAR(c.coefficients[j].ci_lo, classical.coefficients[j].ci_lo, 1e-12);
    EXPECT_NEAR(c.coefficients[j].ci_hi, classical.coefficients[j].ci_hi, 1e-12);
    EXPECT_NEAR(c.coefficients[j].p_value, classical.coefficients[j].p_value, 1e-12);
  }
}

TEST(Corrected, WidthShrinkageDualityAndNesting) {
  const Dataset data = simulated(800, 80, 1.0, 9);
  const MleFit fit = fit_mle(data);
  const SignalStrength s = estimate_sloe(fit, data);
  const CorrectionParams p = solve_eta(data.kappa(), std::sqrt(s.eta_sq));
  ASSERT_GT(p.alpha, 1.0);
  const FeatureScaling emp = FeatureScaling::empirical(data.features());
  for (const FeatureScaling* sc : {static_cast<const FeatureScaling*>(nullptr), &emp}) {
    const InferenceReport r90 = coefficient_inference(fit, p, 0.9, sc);
    const InferenceReport r95 = coefficient_inference(fit, p, 0.95, sc);
    const double z = normal_quantile(0.95);
    for (Eigen::Index j = 0; j < data.d(); ++j) {
      const auto& c = r90.coefficients[j];
      const double tau = sc ? sc->coefficient(j) : 1.0;
      EXPECT_NEAR(c.ci_hi - c.ci_lo, 2 * z * p.sigma_star * tau / (p.alpha * std::sqrt(800.0)), 1e-12);
      EXPECT_LE(c.ci_lo, c.beta_debiased);
      EXPECT_GE(c.ci_hi, c.beta_debiased);
      EXPECT_LT(std::abs(c.beta_debiased), std::abs(c.beta_hat));
      const bool excludes_zero = c.ci_lo > 0.0 || c.ci_hi < 0.0;
      EXPECT_EQ(excludes_zero, c.p_value < 0.1) << j;
      EXPECT_LE(r95.coefficients[j].ci_lo, c.ci_lo);
      EXPECT_GE(r95.coefficients[j].ci_hi, c.ci_hi);
    }
  }
  // Empirical scaling coefficients match the explicit inverse covariance.
  MatrixXd sigma = data.features().transpose() * data.features() / 800.0;
  sigma.diagonal().array() += 1e-8 * sigma.trace() / 80.0;
  const MatrixXd inv = sigma.inverse();
  for (Eigen::Index j = 0; j < 80; j += 9) EXPECT_NEAR(emp.coefficient(j), std::sqrt(inv(j, j)), 1e-10);
  const VectorXd x = data.features().row(3).transpose();
  EXPECT_NEAR(emp.point(x), std::sqrt(x.dot(inv * x)), 1e-9);
}

TEST(Prediction, ZeroInputAndMonotoneMap) {
  const Dataset data = simulated(400, 40, 1.0, 17);
  const MleFit fit = fit_mle(data);
  const CorrectionParams p = solve_eta(data.kappa(), std::sqrt(estimate_sloe(fit, data).eta_sq));
  const PredictionRecord zero = prediction_inference(fit, p, VectorXd::Zero(40), 0.9);
  EXPECT_EQ(zero.logit_ci_lo, 0.0);
  EXPECT_EQ(zero.logit_ci_hi, 0.0);
  EXPECT_EQ(zero.prob_ci_lo, 0.5);
  EXPECT_EQ(zero.prob_ci_hi, 0.5);

  const MatrixXd test = gen_gaussian(50, 40, 5);
  const auto corrected = prediction_intervals(fit, p, test, 0.9);
  const auto corrected95 = prediction_intervals(fit, p, test, 0.95);
  const auto classical = classical_prediction_intervals(fit, test, 0.9);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& r = corrected[i];
    EXPECT_LT(r.prob_ci_lo, r.prob_ci_hi);
    EXPECT_GT(r.prob_ci_lo, 0.0);
    EXPECT_LT(r.prob_ci_hi, 1.0);
    EXPECT_DOUBLE_EQ(r.prob_hat, sigmoid(r.logit_hat / p.alpha));
    EXPECT_LE(corrected95[i].logit_ci_lo, r.logit_ci_lo);
    EXPECT_GE(corrected95[i].logit_ci_hi, r.logit_ci_hi);
    const PredictionRecord single = classical_prediction(fit, test.row(i).transpose(), 0.9);
    EXPECT_NEAR(single.logit_ci_lo, classical[i].logit_ci_lo, 1e-12);
    EXPECT_NEAR(single.logit_ci_hi, classical[i].logit_ci_hi, 1e-12);
  }
}

TEST(Inference, ErrorsOnMismatchAndInvalidLevel) {
  const Dataset data = simulated(200, 20, 1.0, 23);
  const MleFit fit = fit_mle(data);
  try {
    coefficient_inference(fit, manual_params(0.2, 1.1, 1.0), 0.9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KappaMismatch);
  }
  EXPECT_THROW(coefficient_inference(fit, manual_params(0.1, 0.0, 1.0), 0.9), Error);
  EXPECT_THROW(coefficient_inference(fit, manual_params(0.1, 1.1, 1.0), 1.0), Error);
  EXPECT_THROW(classical_inference(fit, 0.0), Error);
}

TEST(BH, Examples) {
  EXPECT_TRUE(bh_procedure({1.0, 1.0, 1.0}, 0.1).empty());
  EXPECT_EQ(bh_procedure({0.05}, 0.1), std::vector<std::size_t>{0});
  EXPECT_TRUE(bh_procedure({}, 0.1).empty());
  // Step-up: the third p-value passes its own threshold and pulls in the second.
  EXPECT_EQ(bh_procedure({0.01, 0.06, 0.07, 0.9}, 0.3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(bh_procedure({0.5}, 1.0), Error);
  EXPECT_THROW(bh_procedure({1.5}, 0.1), Error);
}

TEST(BH, MatchesBruteForceOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + rng.below(30);
    std::vector<double> p(m);
    for (auto& v : p) {
      // Mix of ties, small values and uniforms.
      const double u = rng.uniform();
      v = u < 0.2 ? 0.01 * static_cast<double>(rng.below(3)) : (u < 0.5 ? 0.05 * rng.uniform() : rng.uniform());
    }
    const double q = 0.3 * rng.uniform();
    EXPECT_EQ(bh_procedure(p, q), bh_oracle(p, q)) << "trial " << trial;
  }
}

TEST(RawUnits, DividesByColumnScale) {
  MatrixXd x = gen_gaussian(300, 5, 31);
  x.col(2) *= 10.0;
  x.col(2).array() += 4.0;
  const VectorXd y = gen_outcomes(x, VectorXd::Zero(5), 32).outcomes;
  const Dataset s = standardize(Dataset(x, y));
  const MleFit fit = fit_mle(s);
  const InferenceReport std_report = classical_inference(fit, 0.9);
  const InferenceReport raw = to_raw_units(std_report, s);
  for (std::size_t j = 0; j < 5; ++j) {
    const double scale = s.column_scale()[static_cast<Eigen::Index>(j)];
    EXPECT_NEAR(raw.coefficients[j].beta_hat * scale, std_report.coefficients[j].beta_hat, 1e-12);
    EXPECT_NEAR(raw.coefficients[j].ci_hi * scale, std_report.coefficients[j].ci_hi, 1e-12);
    EXPECT_EQ(raw.coefficients[j].p_value, std_report.coefficients[j].p_value);
  }
  EXPECT_NEAR(s.column_scale()[2], 10.0, 1.5);
  // Unstandardized data pass through untouched.
  const Dataset plain(x, y);
  EXPECT_EQ(to_raw_units(std_report, plain).coefficients[2].beta_hat, std_report.coefficients[2].beta_hat);
}

TEST(Bootstrap, DeterministicAndOrdered) {
  const Dataset data = simulated(200, 10, 1.0, 41);
  const MatrixXd test = gen_gaussian(5, 10, 42);
  const BootstrapResult a = bootstrap_prediction(data, test, 50, 0.9, 7);
  const BootstrapResult b = bootstrap_prediction(data, test, 50, 0.9, 7, {}, nullptr, 2);
  ASSERT_EQ(a.predictions.size(), 5u);
  EXPECT_EQ(a.replicates, 50);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.predictions[i].logit_ci_lo, b.predictions[i].logit_ci_lo);
    EXPECT_LE(a.predictions[i].logit_ci_lo, a.predictions[i].logit_hat);
    EXPECT_GE(a.predictions[i].logit_ci_hi, a.predictions[i].logit_hat);
  }
}
