#include <gtest/gtest.h>

#include <cmath>

#include "sloe/dataset.hpp"
#include "sloe/generators.hpp"
#include "test_support.hpp"

using namespace sloe;
using sloe::testing::TempFile;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an sloe::Error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Dataset, RejectsNonBinaryAndNonFinite) {
  MatrixXd x(2, 1);
  x << 1, 2;
  EXPECT_EQ(code_of([&] { Dataset(x, VectorXd::Constant(2, 0.5)); }), ErrorCode::NonBinaryOutcome);
  x(1, 0) = NAN;
  EXPECT_EQ(code_of([&] { Dataset(x, VectorXd::Zero(2)); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { Dataset(MatrixXd(2, 1), VectorXd::Zero(3)); }), ErrorCode::InvalidArgument);
}

TEST(Dataset, KappaIsExactRatio) {
  const Dataset data(MatrixXd::Ones(136, 20), VectorXd::Zero(136));
  EXPECT_DOUBLE_EQ(data.kappa(), 20.0 / 136.0);
}

TEST(LoadCsv, SmallestWellFormedFile) {
  TempFile f("x,y\n0.5,1\n-1,0\n2,1\n");
  const Dataset data = load_csv(f.path(), "y", false);
  EXPECT_EQ(data.n(), 3);
  EXPECT_EQ(data.d(), 1);
  EXPECT_EQ(data.column_names(), std::vector<std::string>{"x"});
  EXPECT_DOUBLE_EQ(data.features()(2, 0), 2.0);
  EXPECT_DOUBLE_EQ(data.outcomes()[1], 0.0);
}

TEST(LoadCsv, OutcomeSelectedByNameNotPosition) {
  TempFile f("y,a,b\n1,1,2\n0,3,4\n");
  const Dataset data = load_csv(f.path(), "y", false);
  EXPECT_EQ(data.d(), 2);
  EXPECT_DOUBLE_EQ(data.features()(1, 1), 4.0);
  EXPECT_DOUBLE_EQ(data.outcomes()[0], 1.0);
}

TEST(LoadCsv, Errors) {
  EXPECT_EQ(code_of([] { load_csv("/nonexistent/file.csv", "y", false); }), ErrorCode::FileNotFound);
  TempFile two("x,y\n1,2\n");
  EXPECT_EQ(code_of([&] { load_csv(two.path(), "y", false); }), ErrorCode::NonBinaryOutcome);
  TempFile text("x,y\nabc,1\n");
  EXPECT_EQ(code_of([&] { load_csv(text.path(), "y", false); }), ErrorCode::ParseError);
  TempFile missing("x,y\n,1\n");
  EXPECT_EQ(code_of([&] { load_csv(missing.path(), "y", false); }), ErrorCode::MissingValue);
  TempFile na("x,y\nNA,1\n");
  EXPECT_EQ(code_of([&] { load_csv(na.path(), "y", false); }), ErrorCode::MissingValue);
  TempFile ragged("x,y\n1,1,3\n");
  EXPECT_EQ(code_of([&] { load_csv(ragged.path(), "y", false); }), ErrorCode::ParseError);
  TempFile no_outcome("x,z\n1,1\n");
  EXPECT_EQ(code_of([&] { load_csv(no_outcome.path(), "y", false); }), ErrorCode::ParseError);
  TempFile constant("x,y\n1,1\n1,0\n");
  EXPECT_EQ(code_of([&] { load_csv(constant.path(), "y", true); }), ErrorCode::ConstantColumn);
}

TEST(LoadCsv, BomAndCrlf) {
  TempFile f("\xEF\xBB\xBFx,y\r\n1,1\r\n2,0\r\n");
  const Dataset data = load_csv(f.path(), "y", false);
  EXPECT_EQ(data.n(), 2);
  EXPECT_DOUBLE_EQ(data.features()(1, 0), 2.0);
}

TEST(Standardize, MomentsAndIdempotence) {
  MatrixXd x = gen_gaussian(500, 4, 7);
  x.col(0) = 3.0 * x.col(0).array() + 10.0;
  const Dataset raw(x, gen_outcomes(x, VectorXd::Zero(4), 8).outcomes);
  const Dataset s = standardize(raw);
  ASSERT_TRUE(s.standardized());
  for (Eigen::Index j = 0; j < s.d(); ++j) {
    const auto col = s.features().col(j);
    EXPECT_NEAR(col.mean(), 0.0, 1e-8);
    EXPECT_NEAR(col.squaredNorm() / s.n(), 1.0, 1e-6);
  }
  const Dataset twice = standardize(s);
  EXPECT_LE((twice.features() - s.features()).cwiseAbs().maxCoeff(), 1e-10);
  // Composed transform still maps raw units exactly.
  for (Eigen::Index j = 0; j < s.d(); ++j) {
    const VectorXd back = twice.features().col(j).array() * twice.column_scale()[j] + twice.column_center()[j];
    EXPECT_LE((back - x.col(j)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(GenGaussian, MomentsAndDeterminism) {
  const MatrixXd a = gen_gaussian(100000, 1, 42);
  EXPECT_LE(std::abs(a.col(0).mean()), 4.0 / std::sqrt(1e5));
  const double var = (a.col(0).array() - a.col(0).mean()).square().mean();
  EXPECT_NEAR(var, 1.0, 0.05);
  EXPECT_EQ(gen_gaussian(50, 3, 9), gen_gaussian(50, 3, 9));
  EXPECT_NE(gen_gaussian(50, 3, 9), gen_gaussian(50, 3, 10));

  const MatrixXd b = gen_gaussian(10000, 2, 5);
  const VectorXd c0 = b.col(0).array() - b.col(0).mean();
  const VectorXd c1 = b.col(1).array() - b.col(1).mean();
  EXPECT_LE(std::abs(c0.dot(c1) / (c0.norm() * c1.norm())), 0.05);
}

TEST(GenGwas, HardyWeinbergFrequencies) {
  VectorXd p(1);
  p << 0.5;
  const MatrixXd g = gen_gwas_genotypes(100000, p, 3);
  const double n = 1e5;
  EXPECT_NEAR((g.array() == 0.0).count() / n, 0.25, 0.01);
  EXPECT_NEAR((g.array() == 1.0).count() / n, 0.50, 0.01);
  EXPECT_NEAR((g.array() == 2.0).count() / n, 0.25, 0.01);
}

TEST(GenGwas, ExactMomentStandardization) {
  const Eigen::Index n = 20000;
  const MatrixXd x = gen_gwas(n, 5, 11);
  const VectorXd p = gwas_allele_frequencies(5);
  EXPECT_DOUBLE_EQ(p[0], 0.25);
  EXPECT_DOUBLE_EQ(p[4], 0.75);
  for (Eigen::Index j = 0; j < 5; ++j) {
    EXPECT_LE(std::abs(x.col(j).mean()), 4.0 / std::sqrt(static_cast<double>(n)));
    // Standardized values of genotype g are (g - 2p) / sqrt(2p(1-p)).
    const double sd = std::sqrt(2.0 * p[j] * (1.0 - p[j]));
    const double v0 = -2.0 * p[j] / sd;
    EXPECT_NEAR(x.col(j).minCoeff(), v0, 1e-12);
  }
}

TEST(MakeBeta, LiteralConstruction) {
  const VectorXd b = make_beta(8, 1.0);
  VectorXd expected = VectorXd::Zero(8);
  expected[0] = 2.0 / std::sqrt(8.0);
  expected[1] = -2.0 / std::sqrt(8.0);
  EXPECT_LE((b - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(make_beta(13, 0.0), VectorXd::Zero(13));
  EXPECT_NEAR(make_beta(800, std::sqrt(5.0)).squaredNorm(), 5.0, 1e-10);
}

TEST(MakeBeta, NormIdentityPropertyForMultiplesOfEight) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = 8 * (1 + static_cast<Eigen::Index>(rng.below(100)));
    const double gamma = 5.0 * rng.uniform();
    EXPECT_NEAR(make_beta(d, gamma).squaredNorm(), gamma * gamma, 1e-10 * (1 + gamma * gamma));
    EXPECT_EQ(make_beta_null_start(d), d / 4);
  }
}

TEST(MakeBeta, FlooredBlocksWhenNotMultipleOfEight) {
  const VectorXd b = make_beta(20, 1.0);  // blocks [0,2) and [2,5)
  EXPECT_GT(b[1], 0.0);
  EXPECT_LT(b[2], 0.0);
  EXPECT_LT(b[4], 0.0);
  EXPECT_EQ(b[5], 0.0);
  EXPECT_NEAR(b.squaredNorm(), 1.0, 1e-12);
}

TEST(GenOutcomes, NullSignalAndClipping) {
  const MatrixXd x = gen_gaussian(100, 3, 1);
  const auto out = gen_outcomes(x, VectorXd::Zero(3), 2);
  EXPECT_TRUE((out.mu.array() == 0.5).all());

  MatrixXd big(2, 1);
  big << 1e6, -1e6;
  VectorXd beta(1);
  beta << 1.0;
  const auto clipped = gen_outcomes(big, beta, 3);
  EXPECT_LT(clipped.mu[0], 1.0);
  EXPECT_GT(clipped.mu[1], 0.0);
}

TEST(GenOutcomes, MeanMatchesProbabilities) {
  const Eigen::Index n = 100000;
  const MatrixXd x = gen_gaussian(n, 8, 4);
  const VectorXd beta = make_beta(8, 1.0);
  const auto out = gen_outcomes(x, beta, 5);
  EXPECT_LE(std::abs(out.outcomes.mean() - out.mu.mean()), 4.0 / std::sqrt(static_cast<double>(n)));
  const VectorXd lin = x * beta;
  const double var = (lin.array() - lin.mean()).square().mean();
  EXPECT_NEAR(var, 1.0, 0.05);
  EXPECT_EQ(gen_outcomes(x, beta, 5).outcomes, out.outcomes);
}

TEST(MakeTruth, ProbabilitiesFollowTheLink) {
  const MatrixXd x = gen_gaussian(30, 16, 6);
  const TruthSpec t = make_truth(x, 2.0);
  EXPECT_NEAR(t.beta.squaredNorm(), 2.0, 1e-10);
  for (Eigen::Index i = 0; i < 30; ++i) EXPECT_DOUBLE_EQ(t.mu[i], sigmoid(x.row(i).dot(t.beta)));
}
