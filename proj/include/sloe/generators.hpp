#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "sloe/error.hpp"
#include "sloe/math.hpp"
#include "sloe/random.hpp"

namespace sloe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Ground truth of a simulated logistic model.
struct TruthSpec {
  VectorXd beta;
  double gamma_sq = 0.0;
  VectorXd mu;
};

/// n x d matrix of iid N(0,1) draws, filled row by row from one stream.
inline MatrixXd gen_gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  require(n >= 1 && d >= 1, "gen_gaussian: need n, d >= 1");
  Rng rng(seed);
  MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

/// Allele frequencies evenly spaced on [lo, hi], one per column.
inline VectorXd gwas_allele_frequencies(Eigen::Index d, double lo = 0.25, double hi = 0.75) {
  require(d >= 1, "gwas_allele_frequencies: need d >= 1");
  require(lo > 0.0 && lo <= hi && hi < 1.0, "gwas: need 0 < lo <= hi < 1");
  VectorXd p(d);
  if (d == 1) {
    p[0] = 0.5 * (lo + hi);
  } else {
    for (Eigen::Index j = 0; j < d; ++j)
      p[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(d - 1);
  }
  return p;
}

/// Raw Hardy-Weinberg genotypes in {0,1,2} for the given allele frequencies.
inline MatrixXd gen_gwas_genotypes(Eigen::Index n, const VectorXd& allele_freq,
                                   std::uint64_t seed) {
  require(n >= 1 && allele_freq.size() >= 1, "gen_gwas: need n, d >= 1");
  Rng rng(seed);
  const Eigen::Index d = allele_freq.size();
  MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double p = allele_freq[j];
      const double u = rng.uniform();
      const double p0 = (1.0 - p) * (1.0 - p);
      const double p1 = 2.0 * p * (1.0 - p);
      x(i, j) = u < p0 ? 0.0 : (u < p0 + p1 ? 1.0 : 2.0);
    }
  }
  return x;
}

/// Hardy-Weinberg features standardized by their exact moments
/// (mean 2p, variance 2p(1-p)).
inline MatrixXd gen_gwas(Eigen::Index n, Eigen::Index d, std::uint64_t seed,
                         double lo = 0.25, double hi = 0.75) {
  const VectorXd p = gwas_allele_frequencies(d, lo, hi);
  MatrixXd x = gen_gwas_genotypes(n, p, seed);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mean = 2.0 * p[j];
    const double sd = std::sqrt(2.0 * p[j] * (1.0 - p[j]));
    x.col(j) = (x.col(j).array() - mean) / sd;
  }
  return x;
}

/// Block coefficients: +2g/sqrt(d) on the first d/8 entries, -2g/sqrt(d)
/// on the next d/8, zero elsewhere. Block edges are floored when d is not
/// a multiple of 8.
inline VectorXd make_beta(Eigen::Index d, double gamma) {
  require(d >= 1, "make_beta: need d >= 1");
  require(gamma >= 0.0, "make_beta: gamma must be nonnegative");
  VectorXd beta = VectorXd::Zero(d);
  const double magnitude = 2.0 * gamma / std::sqrt(static_cast<double>(d));
  const Eigen::Index first = d / 8;
  const Eigen::Index second = d / 4;
  for (Eigen::Index j = 0; j < first; ++j) beta[j] = magnitude;
  for (Eigen::Index j = first; j < second; ++j) beta[j] = -magnitude;
  return beta;
}

/// Index of the first true-null coordinate produced by make_beta.
inline Eigen::Index make_beta_null_start(Eigen::Index d) { return d / 4; }

struct SimulatedOutcomes {
  VectorXd outcomes;
  VectorXd mu;
};

/// mu_i = g(x_i . beta), Y_i ~ Bernoulli(mu_i).
inline SimulatedOutcomes gen_outcomes(const MatrixXd& features, const VectorXd& beta,
                                      std::uint64_t seed) {
  require(features.cols() == beta.size(), "gen_outcomes: dimension mismatch");
  Rng rng(seed);
  const VectorXd logits = features * beta;
  SimulatedOutcomes out{VectorXd(features.rows()), VectorXd(features.rows())};
  // Clip so mu stays strictly inside (0,1) even for extreme logits.
  constexpr double kClip = 36.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double mu = sigmoid(std::clamp(logits[i], -kClip, kClip));
    out.mu[i] = mu;
    out.outcomes[i] = rng.bernoulli(mu) ? 1.0 : 0.0;
  }
  return out;
}

inline TruthSpec make_truth(const MatrixXd& features, double gamma_sq) {
  TruthSpec truth;
  truth.gamma_sq = gamma_sq;
  truth.beta = make_beta(features.cols(), std::sqrt(gamma_sq));
  truth.mu = (features * truth.beta).unaryExpr([](double t) { return sigmoid(t); });
  return truth;
}

}  // namespace sloe
