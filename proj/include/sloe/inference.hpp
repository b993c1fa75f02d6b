#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sloe/dataset.hpp"
#include "sloe/error.hpp"
#include "sloe/logistic_mle.hpp"
#include "sloe/math.hpp"
#include "sloe/parallel.hpp"
#include "sloe/random.hpp"
#include "sloe/state_evolution.hpp"

namespace sloe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class InferenceMethod { Corrected, Classical, Bootstrap };

inline const char* to_string(InferenceMethod m) {
  switch (m) {
    case InferenceMethod::Corrected: return "CORRECTED";
    case InferenceMethod::Classical: return "CLASSICAL";
    case InferenceMethod::Bootstrap: return "BOOTSTRAP";
  }
  return "UNKNOWN";
}

/// Feature-covariance scale used by the corrected intervals. The isotropic
/// form treats the features as N(0, I); the empirical form plugs in the
/// ridge-regularized second-moment matrix X'X/n.
class FeatureScaling {
 public:
  enum class Kind { Identity, Empirical };

  static FeatureScaling identity(Eigen::Index d) {
    FeatureScaling s;
    s.kind_ = Kind::Identity;
    s.d_ = d;
    return s;
  }

  static FeatureScaling empirical(const MatrixXd& x, double ridge = 1e-8) {
    require(x.rows() >= 1 && x.cols() >= 1, "FeatureScaling: empty design");
    FeatureScaling s;
    s.kind_ = Kind::Empirical;
    s.d_ = x.cols();
    MatrixXd sigma = (x.transpose() * x) / static_cast<double>(x.rows());
    const double shift = ridge * sigma.trace() / static_cast<double>(s.d_);
    sigma.diagonal().array() += shift;
    s.chol_.compute(sigma);
    if (s.chol_.info() != Eigen::Success)
      throw Error(ErrorCode::SingularHessian, "FeatureScaling: covariance is not positive definite");
    const MatrixXd inv_l = s.chol_.matrixL().solve(MatrixXd::Identity(s.d_, s.d_));
    s.tau_coef_ = inv_l.colwise().squaredNorm().transpose().cwiseSqrt();
    return s;
  }

  Kind kind() const noexcept { return kind_; }
  Eigen::Index d() const noexcept { return d_; }

  /// sqrt((Sigma^{-1})_jj); 1 for the isotropic form.
  double coefficient(Eigen::Index j) const {
    return kind_ == Kind::Identity ? 1.0 : tau_coef_[j];
  }

  /// sqrt(x' Sigma^{-1} x); |x|_2 for the isotropic form.
  double point(const VectorXd& x) const {
    require(x.size() == d_, "FeatureScaling: dimension mismatch");
    if (kind_ == Kind::Identity) return x.norm();
    return chol_.matrixL().solve(x).norm();
  }

 private:
  Kind kind_ = Kind::Identity;
  Eigen::Index d_ = 0;
  Eigen::LLT<MatrixXd> chol_;
  VectorXd tau_coef_;
};

struct CoefficientRecord {
  std::string name;
  double beta_hat = 0.0;
  double beta_debiased = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

struct PredictionRecord {
  double logit_hat = 0.0;
  double logit_debiased = 0.0;
  double logit_se = 0.0;
  double logit_ci_lo = 0.0;
  double logit_ci_hi = 0.0;
  double prob_hat = 0.5;
  double prob_ci_lo = 0.5;
  double prob_ci_hi = 0.5;
};

struct InferenceReport {
  InferenceMethod method = InferenceMethod::Corrected;
  double level = 0.9;
  std::vector<CoefficientRecord> coefficients;
  std::vector<PredictionRecord> predictions;
  std::optional<CorrectionParams> params;  // CORRECTED only
};

namespace detail {

inline double critical_value(double level) {
  require(level > 0.0 && level < 1.0, "confidence level must lie in (0,1)");
  return normal_quantile(0.5 + 0.5 * level);
}

inline void check_params(const MleFit& fit, const CorrectionParams& params) {
  fit.require_converged("inference");
  require(params.alpha > 0.0 && params.sigma_star > 0.0 && std::isfinite(params.alpha) &&
              std::isfinite(params.sigma_star),
          "inference: correction parameters are not solved");
  if (std::abs(params.kappa - fit.kappa()) > 1e-9 * std::max(1.0, fit.kappa()))
    throw Error(ErrorCode::KappaMismatch, "inference: parameters were solved at kappa=" +
                                              std::to_string(params.kappa) + " but the fit has kappa=" +
                                              std::to_string(fit.kappa()));
}

inline std::string column_name(const std::vector<std::string>& names, Eigen::Index j) {
  if (static_cast<std::size_t>(j) < names.size()) return names[static_cast<std::size_t>(j)];
  return "x" + std::to_string(j);
}

inline void fill_probabilities(PredictionRecord& r) {
  r.prob_hat = sigmoid(r.logit_debiased);
  r.prob_ci_lo = sigmoid(r.logit_ci_lo);
  r.prob_ci_hi = sigmoid(r.logit_ci_hi);
}

}  // namespace detail

/// Corrected coefficient intervals
///   beta_hat_j / alpha +- z * sigma_star * tau_j / (alpha sqrt(n))
/// and Wald statistics Z_j = sqrt(n) beta_hat_j / (sigma_star tau_j), which is
/// standard normal under beta_j = 0.
inline InferenceReport coefficient_inference(const MleFit& fit, const CorrectionParams& params,
                                             double level, const FeatureScaling* scaling = nullptr,
                                             const std::vector<std::string>& names = {}) {
  detail::check_params(fit, params);
  const double zcrit = detail::critical_value(level);
  const FeatureScaling iso = FeatureScaling::identity(fit.d());
  const FeatureScaling& sc = scaling ? *scaling : iso;
  require(sc.d() == fit.d(), "coefficient_inference: scaling dimension mismatch");
  const double root_n = std::sqrt(static_cast<double>(fit.n()));

  InferenceReport report;
  report.method = InferenceMethod::Corrected;
  report.level = level;
  report.params = params;
  report.coefficients.reserve(static_cast<std::size_t>(fit.d()));
  for (Eigen::Index j = 0; j < fit.d(); ++j) {
    CoefficientRecord r;
    r.name = detail::column_name(names, j);
    r.beta_hat = fit.beta_hat()[j];
    r.beta_debiased = r.beta_hat / params.alpha;
    // Standard error of beta_hat_j itself; the debiased estimate has se / alpha.
    r.se = params.sigma_star * sc.coefficient(j) / root_n;
    const double half = zcrit * r.se / params.alpha;
    r.ci_lo = r.beta_debiased - half;
    r.ci_hi = r.beta_debiased + half;
    r.z = r.beta_hat / r.se;
    r.p_value = two_sided_p_value(r.z);
    report.coefficients.push_back(std::move(r));
  }
  return report;
}

/// Corrected interval for the logit beta'x of a test input.
inline PredictionRecord prediction_inference(const MleFit& fit, const CorrectionParams& params,
                                             const VectorXd& x, double level,
                                             const FeatureScaling* scaling = nullptr) {
  detail::check_params(fit, params);
  require(x.size() == fit.d() && x.allFinite(), "prediction_inference: x must be finite of length d");
  const double zcrit = detail::critical_value(level);
  const double tau = scaling ? scaling->point(x) : x.norm();
  PredictionRecord r;
  r.logit_hat = fit.beta_hat().dot(x);
  r.logit_debiased = r.logit_hat / params.alpha;
  r.logit_se = params.sigma_star * tau / (params.alpha * std::sqrt(static_cast<double>(fit.n())));
  r.logit_ci_lo = r.logit_debiased - zcrit * r.logit_se;
  r.logit_ci_hi = r.logit_debiased + zcrit * r.logit_se;
  detail::fill_probabilities(r);
  return r;
}

inline std::vector<PredictionRecord> prediction_intervals(const MleFit& fit,
                                                          const CorrectionParams& params,
                                                          const MatrixXd& test, double level,
                                                          const FeatureScaling* scaling = nullptr) {
  std::vector<PredictionRecord> out;
  out.reserve(static_cast<std::size_t>(test.rows()));
  for (Eigen::Index i = 0; i < test.rows(); ++i)
    out.push_back(prediction_inference(fit, params, test.row(i).transpose(), level, scaling));
  return out;
}

/// Classical Wald intervals from the inverse observed information.
inline InferenceReport classical_inference(const MleFit& fit, double level,
                                           const std::vector<std::string>& names = {}) {
  fit.require_converged("classical_inference");
  const double zcrit = detail::critical_value(level);
  const VectorXd se = fit.standard_se();
  InferenceReport report;
  report.method = InferenceMethod::Classical;
  report.level = level;
  for (Eigen::Index j = 0; j < fit.d(); ++j) {
    CoefficientRecord r;
    r.name = detail::column_name(names, j);
    r.beta_hat = fit.beta_hat()[j];
    r.beta_debiased = r.beta_hat;
    r.se = se[j];
    r.ci_lo = r.beta_hat - zcrit * r.se;
    r.ci_hi = r.beta_hat + zcrit * r.se;
    r.z = r.beta_hat / r.se;
    r.p_value = two_sided_p_value(r.z);
    report.coefficients.push_back(std::move(r));
  }
  return report;
}

/// Delta-method interval on the logit scale, se(x) = sqrt(x' A^{-1} x).
inline PredictionRecord classical_prediction(const MleFit& fit, const VectorXd& x, double level) {
  fit.require_converged("classical_prediction");
  require(x.size() == fit.d() && x.allFinite(), "classical_prediction: x must be finite of length d");
  const double zcrit = detail::critical_value(level);
  PredictionRecord r;
  r.logit_hat = fit.beta_hat().dot(x);
  r.logit_debiased = r.logit_hat;
  r.logit_se = std::sqrt(fit.quadratic_form(x));
  r.logit_ci_lo = r.logit_hat - zcrit * r.logit_se;
  r.logit_ci_hi = r.logit_hat + zcrit * r.logit_se;
  detail::fill_probabilities(r);
  return r;
}

inline std::vector<PredictionRecord> classical_prediction_intervals(const MleFit& fit,
                                                                    const MatrixXd& test,
                                                                    double level) {
  fit.require_converged("classical_prediction");
  const double zcrit = detail::critical_value(level);
  const VectorXd logits = test * fit.beta_hat();
  const VectorXd q = fit.quadratic_forms(test);
  std::vector<PredictionRecord> out(static_cast<std::size_t>(test.rows()));
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    PredictionRecord& r = out[static_cast<std::size_t>(i)];
    r.logit_hat = r.logit_debiased = logits[i];
    r.logit_se = std::sqrt(q[i]);
    r.logit_ci_lo = r.logit_hat - zcrit * r.logit_se;
    r.logit_ci_hi = r.logit_hat + zcrit * r.logit_se;
    detail::fill_probabilities(r);
  }
  return out;
}

struct BootstrapResult {
  std::vector<PredictionRecord> predictions;
  int replicates = 0;           // requested B
  int separable_dropped = 0;    // replicates whose weighted data were separable
  int failed_dropped = 0;       // replicates without a converged fit
};

/// Percentile multiplier bootstrap: B refits with iid Poisson(1) observation
/// weights; each test logit's interval is the (delta/2, 1 - delta/2) empirical
/// quantile pair of the surviving replicates.
inline BootstrapResult bootstrap_prediction(const Dataset& data, const MatrixXd& test, int replicates,
                                            double level, std::uint64_t seed,
                                            const FitOptions& opts = {}, const VectorXd* start = nullptr,
                                            int jobs = 1) {
  require(replicates >= 1, "bootstrap_prediction: need at least one replicate");
  require(test.cols() == data.d(), "bootstrap_prediction: test dimension mismatch");
  detail::critical_value(level);
  const auto b_count = static_cast<std::size_t>(replicates);
  std::vector<std::optional<VectorXd>> logits(b_count);
  std::vector<int> status(b_count, 0);  // 0 ok, 1 separable, 2 failed
  parallel_for(b_count, jobs, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    VectorXd w(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) w[i] = rng.poisson(1.0);
    try {
      const MleFit fit = fit_logistic(data.features(), data.outcomes(), &w, opts, start);
      if (!fit.converged()) {
        status[b] = 2;
        return;
      }
      logits[b] = test * fit.beta_hat();
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::Numerical) throw;
      status[b] = e.code() == ErrorCode::SeparableData ? 1 : 2;
    }
  });

  BootstrapResult out;
  out.replicates = replicates;
  out.separable_dropped = static_cast<int>(std::count(status.begin(), status.end(), 1));
  out.failed_dropped = static_cast<int>(std::count(status.begin(), status.end(), 2));
  std::vector<const VectorXd*> kept;
  for (const auto& l : logits)
    if (l) kept.push_back(&*l);
  if (kept.empty())
    throw Error(ErrorCode::SeparableData, "bootstrap_prediction: every replicate was dropped");

  const double tail = 0.5 * (1.0 - level);
  std::vector<double> column(kept.size());
  out.predictions.resize(static_cast<std::size_t>(test.rows()));
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    for (std::size_t b = 0; b < kept.size(); ++b) column[b] = (*kept[b])[i];
    std::sort(column.begin(), column.end());
    PredictionRecord& r = out.predictions[static_cast<std::size_t>(i)];
    r.logit_hat = r.logit_debiased = sorted_quantile(column, 0.5);
    r.logit_ci_lo = sorted_quantile(column, tail);
    r.logit_ci_hi = sorted_quantile(column, 1.0 - tail);
    r.logit_se = 0.0;
    detail::fill_probabilities(r);
  }
  return out;
}

/// Benjamini-Hochberg step-up at level q. Returns selected indices in
/// ascending order; equal p-values are ranked by index.
inline std::vector<std::size_t> bh_procedure(const std::vector<double>& p_values, double q) {
  require(q >= 0.0 && q < 1.0, "bh_procedure: q must lie in [0,1)");
  for (double p : p_values) require(p >= 0.0 && p <= 1.0, "bh_procedure: p-values must lie in [0,1]");
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::size_t cutoff = 0;
  for (std::size_t k = m; k >= 1; --k) {
    if (p_values[order[k - 1]] <= q * static_cast<double>(k) / static_cast<double>(m)) {
      cutoff = k;
      break;
    }
  }
  std::vector<std::size_t> selected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cutoff));
  std::sort(selected.begin(), selected.end());
  return selected;
}

/// Coefficient records on raw feature units for a standardized dataset:
/// coefficients, standard errors and interval endpoints divide by the column
/// scale; statistics and p-values are unchanged.
inline InferenceReport to_raw_units(InferenceReport report, const Dataset& data) {
  if (!data.standardized()) return report;
  require(static_cast<Eigen::Index>(report.coefficients.size()) == data.d(),
          "to_raw_units: report does not match data");
  const VectorXd& scale = data.column_scale();
  for (std::size_t j = 0; j < report.coefficients.size(); ++j) {
    CoefficientRecord& r = report.coefficients[j];
    const double s = scale[static_cast<Eigen::Index>(j)];
    r.beta_hat /= s;
    r.beta_debiased /= s;
    r.se /= s;
    r.ci_lo /= s;
    r.ci_hi /= s;
  }
  return report;
}

}  // namespace sloe
