#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "sloe/dataset.hpp"
#include "sloe/error.hpp"
#include "sloe/math.hpp"
#include "sloe/separability.hpp"

namespace sloe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FitOptions {
  double tol = 1e-8;             // on the gradient infinity-norm
  int max_iter = 100;
  int max_halvings = 30;
  double divergence_norm = 1e3;  // |beta|_2 above this triggers the LP check
};

/// Logistic-regression MLE with the factorization of the positive-definite
/// curvature A = sum_i w_i g'(t_i) x_i x_i' at the returned coefficients.
class MleFit {
 public:
  const VectorXd& beta_hat() const noexcept { return beta_hat_; }
  const VectorXd& logits() const noexcept { return logits_; }
  const Eigen::LLT<MatrixXd>& hessian_chol() const noexcept { return chol_; }
  bool converged() const noexcept { return converged_; }
  bool separable() const noexcept { return separable_; }
  int iterations() const noexcept { return iterations_; }
  double grad_norm() const noexcept { return grad_norm_; }
  double log_likelihood() const noexcept { return log_likelihood_; }
  Eigen::Index n() const noexcept { return logits_.size(); }
  Eigen::Index d() const noexcept { return beta_hat_.size(); }
  double kappa() const noexcept {
    return static_cast<double>(d()) / static_cast<double>(n());
  }

  /// v' A^{-1} v from two triangular solves.
  double quadratic_form(const VectorXd& v) const {
    require_converged("quadratic_form");
    require(v.size() == d(), "quadratic_form: dimension mismatch");
    const VectorXd half = chol_.matrixL().solve(v);
    return half.squaredNorm();
  }

  /// x_i' A^{-1} x_i for every row of x.
  VectorXd quadratic_forms(const MatrixXd& x) const {
    require_converged("quadratic_forms");
    require(x.cols() == d(), "quadratic_forms: dimension mismatch");
    const MatrixXd half = chol_.matrixL().solve(x.transpose());
    return half.colwise().squaredNorm().transpose();
  }

  /// Wald standard errors sqrt((A^{-1})_jj).
  VectorXd standard_se() const {
    require_converged("standard_se");
    const MatrixXd inv_l = chol_.matrixL().solve(MatrixXd::Identity(d(), d()));
    return inv_l.colwise().squaredNorm().transpose().cwiseSqrt();
  }

  void require_converged(const char* what) const {
    if (!converged_)
      throw Error(ErrorCode::NotConverged, std::string(what) + ": fit did not converge");
  }

 private:
  friend MleFit fit_logistic(const MatrixXd&, const VectorXd&, const VectorXd*,
                             const FitOptions&, const VectorXd*);
  VectorXd beta_hat_;
  VectorXd logits_;
  Eigen::LLT<MatrixXd> chol_;
  bool converged_ = false;
  bool separable_ = false;
  int iterations_ = 0;
  double grad_norm_ = 0.0;
  double log_likelihood_ = 0.0;
};

namespace detail {

inline double log_likelihood(const VectorXd& logits, const VectorXd& y, const VectorXd* w) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double wi = w ? (*w)[i] : 1.0;
    if (wi == 0.0) continue;
    ll += wi * (y[i] * logits[i] - log1pexp(logits[i]));
  }
  return ll;
}

// True when the coefficients themselves separate the weighted data with
// every margin strictly positive.
inline bool strictly_separates(const VectorXd& logits, const VectorXd& y, const VectorXd* w) {
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (w && !((*w)[i] > 0.0)) continue;
    const double margin = (y[i] > 0.5 ? 1.0 : -1.0) * logits[i];
    if (!(margin > 0.0)) return false;
  }
  return true;
}

inline MatrixXd curvature(const MatrixXd& x, const VectorXd& logits, const VectorXd* w) {
  VectorXd sqrt_weight(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double wi = w ? (*w)[i] : 1.0;
    sqrt_weight[i] = std::sqrt(wi * sigmoid_deriv(logits[i]));
  }
  const MatrixXd xs = sqrt_weight.asDiagonal() * x;
  MatrixXd a = MatrixXd::Zero(x.cols(), x.cols());
  a.selfadjointView<Eigen::Lower>().rankUpdate(xs.transpose());
  return a.selfadjointView<Eigen::Lower>();
}

[[noreturn]] inline void throw_separable() {
  throw Error(ErrorCode::SeparableData, "data linearly separable; MLE does not exist");
}

}  // namespace detail

/// Newton iterations with step halving on the (optionally weighted)
/// log-likelihood. Weights are observation multiplicities; rows with zero
/// weight are ignored.
inline MleFit fit_logistic(const MatrixXd& x, const VectorXd& y, const VectorXd* weights,
                           const FitOptions& opts = {}, const VectorXd* start = nullptr) {
  require(x.rows() == y.size(), "fit_logistic: dimension mismatch");
  require(!weights || weights->size() == y.size(), "fit_logistic: weight length mismatch");
  require(opts.tol >= 0.0 && opts.max_iter >= 0, "fit_logistic: invalid options");
  const Eigen::Index d = x.cols();
  Eigen::Index support = x.rows();
  if (weights) support = (weights->array() > 0.0).count();
  // With d >= n the data are separable in general position.
  if (d >= support) detail::throw_separable();

  bool lp_checked = false;
  auto confirm_separable = [&]() {
    if (!lp_checked) {
      lp_checked = true;
      if (separability_lp(x, y, weights).separable) detail::throw_separable();
    }
  };

  VectorXd beta = start ? *start : VectorXd::Zero(d);
  require(beta.size() == d, "fit_logistic: start has wrong dimension");
  VectorXd logits = x * beta;
  double ll = detail::log_likelihood(logits, y, weights);

  MleFit fit;
  VectorXd resid(y.size());
  VectorXd grad(d);
  int iter = 0;
  for (;; ++iter) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
      resid[i] = (weights ? (*weights)[i] : 1.0) * (y[i] - sigmoid(logits[i]));
    grad.noalias() = x.transpose() * resid;
    fit.grad_norm_ = grad.lpNorm<Eigen::Infinity>();
    if (fit.grad_norm_ <= opts.tol) {
      fit.converged_ = true;
      break;
    }
    if (iter >= opts.max_iter) break;
    if (iter > 0 && detail::strictly_separates(logits, y, weights)) detail::throw_separable();

    Eigen::LLT<MatrixXd> llt(detail::curvature(x, logits, weights));
    if (llt.info() != Eigen::Success) {
      confirm_separable();
      throw Error(ErrorCode::SingularHessian, "fit_logistic: curvature matrix is not positive definite");
    }
    const VectorXd step = llt.solve(grad);
    // Near the optimum the log-likelihood gain falls below its own rounding
    // error; there the full step is accepted within that rounding slack.
    const double decrement = grad.dot(step);
    const double slack = decrement < 1e-6 ? 1e-12 * (1.0 + std::abs(ll)) : 0.0;

    double scale = 1.0;
    bool accepted = false;
    VectorXd trial_beta;
    VectorXd trial_logits;
    for (int h = 0; h <= opts.max_halvings; ++h, scale *= 0.5) {
      trial_beta = beta + scale * step;
      trial_logits.noalias() = x * trial_beta;
      const double trial_ll = detail::log_likelihood(trial_logits, y, weights);
      if (trial_ll >= ll - slack) {
        accepted = true;
        ll = trial_ll;
        break;
      }
    }
    if (!accepted) break;  // roundoff floor reached before the gradient test
    beta = std::move(trial_beta);
    logits = std::move(trial_logits);
    if (beta.norm() > opts.divergence_norm) confirm_separable();
  }

  fit.iterations_ = iter;
  if (detail::strictly_separates(logits, y, weights)) detail::throw_separable();
  if (!fit.converged_) confirm_separable();
  fit.chol_.compute(detail::curvature(x, logits, weights));
  if (fit.chol_.info() != Eigen::Success) {
    confirm_separable();
    throw Error(ErrorCode::SingularHessian, "fit_logistic: rank-deficient design");
  }
  fit.beta_hat_ = std::move(beta);
  fit.logits_ = std::move(logits);
  fit.log_likelihood_ = ll;
  return fit;
}

inline MleFit fit_mle(const Dataset& data, const FitOptions& opts = {},
                      const VectorXd* start = nullptr) {
  return fit_logistic(data.features(), data.outcomes(), nullptr, opts, start);
}

/// Linear-program decision of whether the outcomes are (completely or
/// quasi-completely) separable in the features.
inline bool check_separable(const Dataset& data) {
  return separability_lp(data.features(), data.outcomes()).separable;
}

}  // namespace sloe
