#pragma once

#include <map>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "sloe/dataset.hpp"
#include "sloe/error.hpp"
#include "sloe/logistic_mle.hpp"
#include "sloe/math.hpp"

namespace sloe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class SignalMethod { Sloe, LooExact, ProbeFrontier };

inline const char* to_string(SignalMethod m) {
  switch (m) {
    case SignalMethod::Sloe: return "SLOE";
    case SignalMethod::LooExact: return "LOO_EXACT";
    case SignalMethod::ProbeFrontier: return "PROBE_FRONTIER";
  }
  return "UNKNOWN";
}

/// Estimate of the corrupted signal strength eta^2 = lim var(beta_hat' X).
struct SignalStrength {
  double eta_sq = 0.0;
  SignalMethod method = SignalMethod::Sloe;
  std::optional<VectorXd> loo_logits;
  std::map<std::string, double> diagnostics;
};

/// Exact leave-one-out logits beta_{-i}' x_i from n Newton refits, each
/// warm-started at the full-data fit.
inline VectorXd loo_logits_exact(const Dataset& data, const MleFit& full_fit,
                                 const FitOptions& opts = {}) {
  full_fit.require_converged("loo_logits_exact");
  const Eigen::Index n = data.n();
  VectorXd weights = VectorXd::Ones(n);
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    weights[i] = 0.0;
    try {
      const MleFit refit =
          fit_logistic(data.features(), data.outcomes(), &weights, opts, &full_fit.beta_hat());
      if (!refit.converged())
        throw Error(ErrorCode::NotConverged,
                    "loo_logits_exact: refit without row " + std::to_string(i) + " did not converge",
                    static_cast<std::size_t>(i));
      out[i] = data.features().row(i).dot(refit.beta_hat());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SeparableData)
        throw Error(ErrorCode::SeparableSubproblem,
                    "loo_logits_exact: data without row " + std::to_string(i) + " are separable",
                    static_cast<std::size_t>(i));
      throw;
    }
    weights[i] = 1.0;
  }
  return out;
}

inline VectorXd loo_logits_exact(const Dataset& data, const FitOptions& opts = {}) {
  const MleFit fit = fit_mle(data, opts);
  if (!fit.converged())
    throw Error(ErrorCode::NotConverged, "loo_logits_exact: full-data fit did not converge");
  return loo_logits_exact(data, fit, opts);
}

/// Rank-one approximation of the leave-one-out logits:
///   S_i = t_i - W_i / (1 - g'(t_i) W_i) * (y_i - g(t_i)),  W_i = x_i' A^{-1} x_i.
/// One factorization of A serves every row.
inline VectorXd sloe_logits(const MleFit& fit, const Dataset& data) {
  fit.require_converged("sloe_logits");
  require(fit.n() == data.n() && fit.d() == data.d(), "sloe_logits: fit does not match data");
  const VectorXd w = fit.quadratic_forms(data.features());
  const VectorXd& t = fit.logits();
  VectorXd s(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double leverage = sigmoid_deriv(t[i]) * w[i];
    const double gap = 1.0 - leverage;
    if (!(gap > 1e-12))
      throw Error(ErrorCode::LeverageAtOne,
                  "sloe_logits: leverage of row " + std::to_string(i) + " is at one",
                  static_cast<std::size_t>(i));
    s[i] = t[i] - (w[i] / gap) * (data.outcomes()[i] - sigmoid(t[i]));
  }
  return s;
}

/// Divide-by-n variance of the (approximate) leave-one-out logits.
inline SignalStrength corrupted_signal_strength(const VectorXd& loo_logits,
                                                SignalMethod method = SignalMethod::Sloe) {
  require(loo_logits.size() >= 2, "corrupted_signal_strength: need n >= 2");
  const double n = static_cast<double>(loo_logits.size());
  const double mean = loo_logits.sum() / n;
  // Centered form of (1/n) sum S^2 - mean^2, numerically the same quantity.
  const double var = (loo_logits.array() - mean).square().sum() / n;
  SignalStrength out;
  out.eta_sq = std::max(var, 0.0);
  out.method = method;
  out.loo_logits = loo_logits;
  out.diagnostics["mean_loo_logit"] = mean;
  return out;
}

inline SignalStrength estimate_sloe(const MleFit& fit, const Dataset& data) {
  return corrupted_signal_strength(sloe_logits(fit, data), SignalMethod::Sloe);
}

}  // namespace sloe
