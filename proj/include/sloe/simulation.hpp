#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sloe/dataset.hpp"
#include "sloe/error.hpp"
#include "sloe/frontier_table.hpp"
#include "sloe/generators.hpp"
#include "sloe/inference.hpp"
#include "sloe/logistic_mle.hpp"
#include "sloe/math.hpp"
#include "sloe/parallel.hpp"
#include "sloe/probe_frontier.hpp"
#include "sloe/random.hpp"
#include "sloe/sloe.hpp"
#include "sloe/state_evolution.hpp"

namespace sloe {

enum class Experiment { Coverage, NullPvalues, Convergence, Runtime, Bootstrap, Fdr };
enum class FeatureFamily { Gaussian, Gwas };

inline const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::Coverage: return "coverage";
    case Experiment::NullPvalues: return "null_pvalues";
    case Experiment::Convergence: return "convergence";
    case Experiment::Runtime: return "runtime";
    case Experiment::Bootstrap: return "bootstrap";
    case Experiment::Fdr: return "fdr";
  }
  return "unknown";
}

inline const char* to_string(FeatureFamily f) {
  return f == FeatureFamily::Gaussian ? "gaussian" : "gwas";
}

struct ExperimentConfig {
  Experiment experiment = Experiment::Coverage;
  std::vector<long> n{1000};
  std::vector<double> kappa{0.1};
  std::vector<double> gamma_sq{1.0};
  FeatureFamily features = FeatureFamily::Gaussian;
  long reps = 100;
  double level = 0.9;
  std::vector<InferenceMethod> methods{InferenceMethod::Corrected, InferenceMethod::Classical};
  std::uint64_t seed = 0;
  int jobs = 1;
  long test_size = 0;  // 0: min(n, 1000)
  int bootstrap_b = 200;
  std::vector<double> q_grid{0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
  double stop_separable_fraction = 0.1;
  FeatureScaling::Kind scaling = FeatureScaling::Kind::Identity;
  int probe_reps = 11;
  bool keep_raw = false;

  bool has(InferenceMethod m) const {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
  }
  long test_rows(long n_train) const { return test_size > 0 ? test_size : std::min(n_train, 1000L); }
};

inline Eigen::Index feature_count(long n, double kappa) {
  return static_cast<Eigen::Index>(std::llround(kappa * static_cast<double>(n)));
}

inline void validate(const ExperimentConfig& c) {
  require(!c.n.empty() && !c.kappa.empty() && !c.gamma_sq.empty(), "config: grids must be non-empty");
  require(c.reps >= 1, "config: reps must be >= 1");
  require(c.level > 0.0 && c.level < 1.0, "config: level must lie in (0,1)");
  require(!c.methods.empty(), "config: methods must be non-empty");
  require(c.bootstrap_b >= 1, "config: bootstrap_b must be >= 1");
  require(c.jobs >= 0, "config: jobs must be >= 0");
  require(c.test_size >= 0, "config: test_size must be >= 0");
  require(c.probe_reps >= 1, "config: probe_reps must be >= 1");
  require(c.stop_separable_fraction >= 0.0 && c.stop_separable_fraction <= 1.0,
          "config: stop_separable_fraction must lie in [0,1]");
  for (double g : c.gamma_sq) require(g >= 0.0 && std::isfinite(g), "config: gamma_sq must be >= 0");
  for (double q : c.q_grid) require(q >= 0.0 && q < 1.0, "config: q_grid entries must lie in [0,1)");
  for (long n : c.n) {
    require(n >= 2, "config: n must be >= 2");
    for (double k : c.kappa) {
      require(k > 0.0 && k < 1.0, "config: kappa must lie in (0,1)");
      require(feature_count(n, k) >= 8, "config: d = round(kappa * n) must be >= 8 at every grid point");
    }
  }
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::InvalidArgument, "config: '" + key + "' expects a number, got '" + v + "'");
}

inline long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::InvalidArgument, "config: '" + key + "' expects an integer, got '" + v + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::InvalidArgument, "config: '" + key + "' expects true/false, got '" + v + "'");
}

inline InferenceMethod parse_method(const std::string& v) {
  std::string u = v;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
  if (u == "CORRECTED") return InferenceMethod::Corrected;
  if (u == "CLASSICAL") return InferenceMethod::Classical;
  if (u == "BOOTSTRAP") return InferenceMethod::Bootstrap;
  throw Error(ErrorCode::InvalidArgument, "config: unknown method '" + v + "'");
}

}  // namespace detail

/// Parses the flat `key = value` format: one pair per line, `#` starts a
/// comment, lists are comma separated. Unknown keys are rejected.
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidArgument,
                  "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw Error(ErrorCode::InvalidArgument, "config: duplicate key '" + key + "'");
    const auto list = detail::split_list(value);
    if (key == "experiment") {
      static const std::map<std::string, Experiment> names{
          {"coverage", Experiment::Coverage},       {"null_pvalues", Experiment::NullPvalues},
          {"convergence", Experiment::Convergence}, {"runtime", Experiment::Runtime},
          {"bootstrap", Experiment::Bootstrap},     {"fdr", Experiment::Fdr}};
      const auto it = names.find(value);
      if (it == names.end())
        throw Error(ErrorCode::InvalidArgument, "config: unknown experiment '" + value + "'");
      c.experiment = it->second;
    } else if (key == "n") {
      c.n.clear();
      for (const auto& v : list) c.n.push_back(detail::parse_long(key, v));
    } else if (key == "kappa") {
      c.kappa.clear();
      for (const auto& v : list) c.kappa.push_back(detail::parse_double(key, v));
    } else if (key == "gamma_sq") {
      c.gamma_sq.clear();
      for (const auto& v : list) c.gamma_sq.push_back(detail::parse_double(key, v));
    } else if (key == "features") {
      if (value == "gaussian") c.features = FeatureFamily::Gaussian;
      else if (value == "gwas") c.features = FeatureFamily::Gwas;
      else throw Error(ErrorCode::InvalidArgument, "config: unknown feature family '" + value + "'");
    } else if (key == "reps") {
      c.reps = detail::parse_long(key, value);
    } else if (key == "level") {
      c.level = detail::parse_double(key, value);
    } else if (key == "methods") {
      c.methods.clear();
      for (const auto& v : list) c.methods.push_back(detail::parse_method(v));
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(detail::parse_long(key, value));
    } else if (key == "jobs") {
      c.jobs = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "test_size") {
      c.test_size = detail::parse_long(key, value);
    } else if (key == "bootstrap_b") {
      c.bootstrap_b = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "q_grid") {
      c.q_grid.clear();
      for (const auto& v : list) c.q_grid.push_back(detail::parse_double(key, v));
    } else if (key == "stop_separable_fraction") {
      c.stop_separable_fraction = detail::parse_double(key, value);
    } else if (key == "scaling") {
      if (value == "identity") c.scaling = FeatureScaling::Kind::Identity;
      else if (value == "empirical") c.scaling = FeatureScaling::Kind::Empirical;
      else throw Error(ErrorCode::InvalidArgument, "config: unknown scaling '" + value + "'");
    } else if (key == "probe_reps") {
      c.probe_reps = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "keep_raw") {
      c.keep_raw = detail::parse_bool(key, value);
    } else {
      throw Error(ErrorCode::InvalidArgument, "config: unknown key '" + key + "'");
    }
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open config '" + path + "'");
  return parse_config(in);
}

/// One row of the tidy output: a grid point under one method.
struct PointResult {
  std::string method;
  long n = 0;
  double kappa = 0.0;
  double gamma_sq = 0.0;
  long reps_total = 0;
  long reps_used = 0;
  long dropped_separable = 0;
  long dropped_solver = 0;
  bool terminated = false;  // skipped: the curve stopped at a smaller kappa
  std::map<std::string, double> metrics;
};

struct ExperimentResult {
  Experiment experiment = Experiment::Coverage;
  ExperimentConfig config;
  std::vector<PointResult> points;
  /// Pooled per-method samples (null p-values), keyed by method name.
  std::map<std::string, std::vector<double>> samples;
  /// Optional per-rep rows.
  std::vector<std::map<std::string, double>> raw;
  double wall_seconds = 0.0;
};

namespace detail {

struct SimulatedData {
  Dataset train;
  VectorXd beta;
};

inline MatrixXd gen_features(FeatureFamily family, Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  return family == FeatureFamily::Gaussian ? gen_gaussian(n, d, seed) : gen_gwas(n, d, seed);
}

inline SimulatedData simulate(FeatureFamily family, long n, double kappa, double gamma_sq,
                              std::uint64_t seed) {
  const Eigen::Index d = feature_count(n, kappa);
  MatrixXd x = gen_features(family, n, d, derive_seed(seed, 1));
  VectorXd beta = make_beta(d, std::sqrt(gamma_sq));
  VectorXd y = gen_outcomes(x, beta, derive_seed(seed, 2)).outcomes;
  return {Dataset(std::move(x), std::move(y)), std::move(beta)};
}

inline std::uint64_t point_seed(std::uint64_t seed, std::size_t point, long rep) {
  return derive_seed(derive_seed(seed, point), static_cast<std::uint64_t>(rep));
}

struct Tally {
  double hits = 0.0;
  double trials = 0.0;
  double width_sum = 0.0;
  long reps_used = 0;
  long dropped_separable = 0;
  long dropped_solver = 0;
  double extra_dropped = 0.0;  // bootstrap replicates dropped

  void add_intervals(const std::vector<PredictionRecord>& recs, const VectorXd& mu) {
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const double m = mu[static_cast<Eigen::Index>(i)];
      const auto& r = recs[i];
      if (r.prob_ci_lo <= m && m <= r.prob_ci_hi) hits += 1.0;
      trials += 1.0;
      width_sum += r.prob_ci_hi - r.prob_ci_lo;
    }
    ++reps_used;
  }
};

inline PointResult make_point(const char* method, long n, double kappa, double gamma_sq, long reps) {
  PointResult p;
  p.method = method;
  p.n = n;
  p.kappa = kappa;
  p.gamma_sq = gamma_sq;
  p.reps_total = reps;
  return p;
}

// Correction parameters from the SLOE estimate of eta on a converged fit.
inline CorrectionParams sloe_params(const MleFit& fit, const Dataset& data, const SolverOptions& so = {}) {
  const SignalStrength s = estimate_sloe(fit, data);
  return solve_eta(data.kappa(), std::sqrt(s.eta_sq), so);
}

inline bool is_solver_failure(const Error& e) {
  return e.category() == ErrorCategory::Numerical && e.code() != ErrorCode::SeparableData;
}

}  // namespace detail

/// Prediction-interval coverage of the true success probabilities on an iid
/// test set. A curve over kappa (fixed n, gamma^2) stops once more than
/// `stop_separable_fraction` of the reps are separable.
inline ExperimentResult run_coverage(const ExperimentConfig& config) {
  validate(config);
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.experiment = config.experiment;
  result.config = config;
  std::vector<double> kappas = config.kappa;
  std::sort(kappas.begin(), kappas.end());

  std::vector<InferenceMethod> methods;
  for (auto m : {InferenceMethod::Corrected, InferenceMethod::Classical, InferenceMethod::Bootstrap})
    if (config.has(m)) methods.push_back(m);

  std::size_t point_index = 0;
  for (long n : config.n) {
    for (double gamma_sq : config.gamma_sq) {
      bool stopped = false;
      for (double kappa : kappas) {
        const std::size_t pid = point_index++;
        if (stopped) {
          for (auto m : methods) {
            PointResult p = detail::make_point(to_string(m), n, kappa, gamma_sq, 0);
            p.terminated = true;
            result.points.push_back(std::move(p));
          }
          continue;
        }
        struct RepOut {
          bool separable = false;
          std::map<InferenceMethod, std::optional<std::vector<PredictionRecord>>> recs;
          std::map<InferenceMethod, bool> solver_failed;
          VectorXd mu;
          double boot_dropped = 0.0;
          double eta_sq_hat = NAN, alpha = NAN;
        };
        std::vector<RepOut> reps(static_cast<std::size_t>(config.reps));
        parallel_for(reps.size(), config.jobs, [&](std::size_t r) {
          RepOut& out = reps[r];
          const std::uint64_t s = detail::point_seed(config.seed, pid, static_cast<long>(r));
          const auto sim = detail::simulate(config.features, n, kappa, gamma_sq, s);
          const Eigen::Index d = sim.train.d();
          const MatrixXd test = detail::gen_features(config.features, config.test_rows(n), d,
                                                     derive_seed(s, 3));
          out.mu = (test * sim.beta).unaryExpr([](double t) { return sigmoid(t); });
          std::optional<MleFit> fit;
          try {
            fit = fit_mle(sim.train);
            if (!fit->converged()) throw Error(ErrorCode::NotConverged, "fit did not converge");
          } catch (const Error& e) {
            if (e.code() == ErrorCode::SeparableData) {
              out.separable = true;
              return;
            }
            if (!detail::is_solver_failure(e)) throw;
            for (auto m : methods) out.solver_failed[m] = true;
            return;
          }
          for (auto m : methods) {
            try {
              if (m == InferenceMethod::Corrected) {
                const CorrectionParams params = detail::sloe_params(*fit, sim.train);
                out.eta_sq_hat = params.eta_sq;
                out.alpha = params.alpha;
                std::optional<FeatureScaling> sc;
                if (config.scaling == FeatureScaling::Kind::Empirical)
                  sc = FeatureScaling::empirical(sim.train.features());
                out.recs[m] = prediction_intervals(*fit, params, test, config.level, sc ? &*sc : nullptr);
              } else if (m == InferenceMethod::Classical) {
                out.recs[m] = classical_prediction_intervals(*fit, test, config.level);
              } else {
                const BootstrapResult b =
                    bootstrap_prediction(sim.train, test, config.bootstrap_b, config.level,
                                         derive_seed(s, 4), {}, &fit->beta_hat());
                out.boot_dropped = b.separable_dropped + b.failed_dropped;
                out.recs[m] = b.predictions;
              }
            } catch (const Error& e) {
              if (!detail::is_solver_failure(e) && e.code() != ErrorCode::SeparableData &&
                  e.code() != ErrorCode::InconsistentEta)
                throw;
              out.solver_failed[m] = true;
            }
          }
        });

        long separable = 0;
        std::map<InferenceMethod, detail::Tally> tallies;
        for (std::size_t r = 0; r < reps.size(); ++r) {
          const RepOut& out = reps[r];
          if (out.separable) ++separable;
          for (auto m : methods) {
            detail::Tally& t = tallies[m];
            if (out.separable) {
              ++t.dropped_separable;
            } else if (out.solver_failed.count(m) && out.solver_failed.at(m)) {
              ++t.dropped_solver;
            } else {
              t.add_intervals(*out.recs.at(m), out.mu);
              if (m == InferenceMethod::Bootstrap) t.extra_dropped += out.boot_dropped;
            }
          }
          if (config.keep_raw) {
            std::map<std::string, double> row{{"n", double(n)}, {"kappa", kappa}, {"gamma_sq", gamma_sq},
                                              {"rep", double(r)}, {"separable", out.separable ? 1.0 : 0.0},
                                              {"eta_sq_hat", out.eta_sq_hat}, {"alpha", out.alpha}};
            result.raw.push_back(std::move(row));
          }
        }
        const double sep_frac = static_cast<double>(separable) / static_cast<double>(config.reps);
        for (auto m : methods) {
          const detail::Tally& t = tallies[m];
          PointResult p = detail::make_point(to_string(m), n, kappa, gamma_sq, config.reps);
          p.reps_used = t.reps_used;
          p.dropped_separable = t.dropped_separable;
          p.dropped_solver = t.dropped_solver;
          p.metrics["separable_fraction"] = sep_frac;
          if (t.trials > 0) {
            const double cov = t.hits / t.trials;
            p.metrics["coverage"] = cov;
            p.metrics["coverage_se"] = std::sqrt(cov * (1.0 - cov) / t.trials);
            p.metrics["mean_ci_width"] = t.width_sum / t.trials;
            p.metrics["test_points"] = t.trials;
          }
          if (m == InferenceMethod::Bootstrap) {
            p.metrics["bootstrap_b"] = config.bootstrap_b;
            if (t.reps_used > 0) p.metrics["mean_replicates_dropped"] = t.extra_dropped / t.reps_used;
          }
          result.points.push_back(std::move(p));
        }
        if (sep_frac > config.stop_separable_fraction) stopped = true;
      }
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Percentile-bootstrap baseline: the coverage protocol with the bootstrap
/// intervals alongside the corrected ones.
inline ExperimentResult run_bootstrap_baseline(ExperimentConfig config) {
  if (!config.has(InferenceMethod::Bootstrap)) config.methods.push_back(InferenceMethod::Bootstrap);
  return run_coverage(config);
}

/// Pooled p-values of the true-null coordinates with a KS test against
/// uniformity per method.
inline ExperimentResult run_null_pvalues(const ExperimentConfig& config) {
  validate(config);
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.experiment = config.experiment;
  result.config = config;
  std::size_t point_index = 0;
  for (long n : config.n) {
    for (double gamma_sq : config.gamma_sq) {
      for (double kappa : config.kappa) {
        const std::size_t pid = point_index++;
        struct RepOut {
          int status = 0;  // 0 ok, 1 separable, 2 fit failure
          bool corrected_failed = false;
          std::vector<double> corrected, classical;
        };
        std::vector<RepOut> reps(static_cast<std::size_t>(config.reps));
        parallel_for(reps.size(), config.jobs, [&](std::size_t r) {
          RepOut& out = reps[r];
          const auto sim = detail::simulate(config.features, n, kappa, gamma_sq,
                                            detail::point_seed(config.seed, pid, static_cast<long>(r)));
          std::optional<MleFit> fit;
          try {
            fit = fit_mle(sim.train);
            if (!fit->converged()) throw Error(ErrorCode::NotConverged, "fit did not converge");
          } catch (const Error& e) {
            if (e.category() != ErrorCategory::Numerical) throw;
            out.status = e.code() == ErrorCode::SeparableData ? 1 : 2;
            return;
          }
          const Eigen::Index start = make_beta_null_start(sim.train.d());
          if (config.has(InferenceMethod::Classical)) {
            const auto rep = classical_inference(*fit, config.level);
            for (Eigen::Index j = start; j < sim.train.d(); ++j)
              out.classical.push_back(rep.coefficients[static_cast<std::size_t>(j)].p_value);
          }
          if (config.has(InferenceMethod::Corrected)) {
            try {
              const CorrectionParams params = detail::sloe_params(*fit, sim.train);
              std::optional<FeatureScaling> sc;
              if (config.scaling == FeatureScaling::Kind::Empirical)
                sc = FeatureScaling::empirical(sim.train.features());
              const auto rep = coefficient_inference(*fit, params, config.level, sc ? &*sc : nullptr);
              for (Eigen::Index j = start; j < sim.train.d(); ++j)
                out.corrected.push_back(rep.coefficients[static_cast<std::size_t>(j)].p_value);
            } catch (const Error& e) {
              if (e.category() != ErrorCategory::Numerical) throw;
              out.corrected_failed = true;
            }
          }
        });
        for (auto m : {InferenceMethod::Corrected, InferenceMethod::Classical}) {
          if (!config.has(m)) continue;
          PointResult p = detail::make_point(to_string(m), n, kappa, gamma_sq, config.reps);
          std::vector<double> pooled;
          for (const RepOut& out : reps) {
            if (out.status == 1) { ++p.dropped_separable; continue; }
            if (out.status == 2 || (m == InferenceMethod::Corrected && out.corrected_failed)) {
              ++p.dropped_solver;
              continue;
            }
            ++p.reps_used;
            const auto& v = m == InferenceMethod::Corrected ? out.corrected : out.classical;
            pooled.insert(pooled.end(), v.begin(), v.end());
          }
          p.metrics["null_pvalues"] = static_cast<double>(pooled.size());
          if (!pooled.empty()) {
            const KsResult ks = ks_uniform(pooled);
            p.metrics["ks_statistic"] = ks.statistic;
            p.metrics["ks_p_value"] = ks.p_value;
            const double below = static_cast<double>(
                std::count_if(pooled.begin(), pooled.end(), [&](double v) { return v < 1.0 - config.level; }));
            p.metrics["rejection_rate"] = below / static_cast<double>(pooled.size());
          }
          auto& bucket = result.samples[std::string(to_string(m))];
          bucket.insert(bucket.end(), pooled.begin(), pooled.end());
          result.points.push_back(std::move(p));
        }
      }
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Mean squared differences among the SLOE estimate, the plug-in
/// beta_hat' Sigma beta_hat (Sigma = I for both feature families) and the
/// state-evolution eta^2 at the true signal strength.
inline ExperimentResult run_sloe_convergence(const ExperimentConfig& config) {
  validate(config);
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.experiment = config.experiment;
  result.config = config;
  std::size_t point_index = 0;
  for (double gamma_sq : config.gamma_sq) {
    for (double kappa : config.kappa) {
      for (long n : config.n) {
        const std::size_t pid = point_index++;
        const Eigen::Index d = feature_count(n, kappa);
        const double gamma_true = make_beta(d, std::sqrt(gamma_sq)).norm();
        SolverOptions so;
        so.check_existence = false;
        const double eta_sq = solve_gamma(static_cast<double>(d) / n, gamma_true, so).eta_sq;
        struct RepOut {
          int status = 0;
          double sloe = NAN, plugin = NAN;
        };
        std::vector<RepOut> reps(static_cast<std::size_t>(config.reps));
        parallel_for(reps.size(), config.jobs, [&](std::size_t r) {
          RepOut& out = reps[r];
          const auto sim = detail::simulate(config.features, n, kappa, gamma_sq,
                                            detail::point_seed(config.seed, pid, static_cast<long>(r)));
          try {
            const MleFit fit = fit_mle(sim.train);
            if (!fit.converged()) throw Error(ErrorCode::NotConverged, "fit did not converge");
            out.sloe = estimate_sloe(fit, sim.train).eta_sq;
            out.plugin = fit.beta_hat().squaredNorm();
          } catch (const Error& e) {
            if (e.category() != ErrorCategory::Numerical) throw;
            out.status = e.code() == ErrorCode::SeparableData ? 1 : 2;
          }
        });
        PointResult p = detail::make_point("SLOE", n, kappa, gamma_sq, config.reps);
        double e1 = 0, e2 = 0, e3 = 0;
        for (const RepOut& out : reps) {
          if (out.status == 1) { ++p.dropped_separable; continue; }
          if (out.status == 2) { ++p.dropped_solver; continue; }
          ++p.reps_used;
          e1 += (out.sloe - eta_sq) * (out.sloe - eta_sq);
          e2 += (out.plugin - eta_sq) * (out.plugin - eta_sq);
          e3 += (out.sloe - out.plugin) * (out.sloe - out.plugin);
        }
        p.metrics["eta_sq_true"] = eta_sq;
        if (p.reps_used > 0) {
          const double u = static_cast<double>(p.reps_used);
          p.metrics["mse_sloe_vs_eta"] = e1 / u;
          p.metrics["mse_plugin_vs_eta"] = e2 / u;
          p.metrics["mse_sloe_vs_plugin"] = e3 / u;
        }
        result.points.push_back(std::move(p));
      }
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Wall-clock medians of the two signal-strength pipelines on the same data.
/// Data generation and the shared MLE fit are outside both timers. SLOE:
/// approximate leave-one-out logits, their variance, and the eta solve.
/// ProbeFrontier: the full-data separability check, the subsample search,
/// and the gamma solve. Reps run sequentially so timings do not compete.
inline ExperimentResult run_runtime(const ExperimentConfig& config,
                                    const FrontierTable* table = nullptr) {
  validate(config);
  const auto t0 = std::chrono::steady_clock::now();
  const FrontierTable& frontier = table ? *table : default_frontier();
  ExperimentResult result;
  result.experiment = config.experiment;
  result.config = config;
  using clock = std::chrono::steady_clock;
  std::size_t point_index = 0;
  for (double gamma_sq : config.gamma_sq) {
    for (double kappa : config.kappa) {
      for (long n : config.n) {
        const std::size_t pid = point_index++;
        std::vector<double> t_sloe, t_probe;
        PointResult ps = detail::make_point("SLOE", n, kappa, gamma_sq, config.reps);
        PointResult pp = detail::make_point("PROBE_FRONTIER", n, kappa, gamma_sq, config.reps);
        std::vector<double> gamma_sq_probe, eta_sq_sloe;
        for (long r = 0; r < config.reps; ++r) {
          const std::uint64_t s = detail::point_seed(config.seed, pid, r);
          const auto sim = detail::simulate(config.features, n, kappa, gamma_sq, s);
          std::optional<MleFit> fit;
          try {
            fit = fit_mle(sim.train);
            if (!fit->converged()) throw Error(ErrorCode::NotConverged, "fit did not converge");
          } catch (const Error& e) {
            if (e.category() != ErrorCategory::Numerical) throw;
            const bool sep = e.code() == ErrorCode::SeparableData;
            ++(sep ? ps.dropped_separable : ps.dropped_solver);
            ++(sep ? pp.dropped_separable : pp.dropped_solver);
            continue;
          }
          try {
            const auto a = clock::now();
            const CorrectionParams params = detail::sloe_params(*fit, sim.train);
            t_sloe.push_back(std::chrono::duration<double>(clock::now() - a).count());
            eta_sq_sloe.push_back(params.eta_sq);
            ++ps.reps_used;
          } catch (const Error& e) {
            if (e.category() != ErrorCategory::Numerical) throw;
            ++ps.dropped_solver;
          }
          try {
            ProbeOptions po;
            po.subsample_reps = config.probe_reps;
            const auto a = clock::now();
            const SignalStrength probe = probe_frontier_gamma(sim.train, frontier, derive_seed(s, 5), po);
            t_probe.push_back(std::chrono::duration<double>(clock::now() - a).count());
            gamma_sq_probe.push_back(probe.diagnostics.at("gamma_sq_hat"));
            ++pp.reps_used;
          } catch (const Error& e) {
            if (e.category() != ErrorCategory::Numerical) throw;
            ++pp.dropped_solver;
          }
        }
        if (!t_sloe.empty()) {
          ps.metrics["median_seconds"] = median(t_sloe);
          ps.metrics["median_eta_sq"] = median(eta_sq_sloe);
        }
        if (!t_probe.empty()) {
          pp.metrics["median_seconds"] = median(t_probe);
          pp.metrics["median_gamma_sq_hat"] = median(gamma_sq_probe);
        }
        if (!t_sloe.empty() && !t_probe.empty())
          pp.metrics["speedup_vs_sloe"] = pp.metrics["median_seconds"] / ps.metrics["median_seconds"];
        result.points.push_back(std::move(ps));
        result.points.push_back(std::move(pp));
      }
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Benjamini-Hochberg selections over the coefficients; the first d/4
/// coordinates carry signal, the rest are null. Reports the mean
/// false-discovery proportion (0 when nothing is selected) per q and method.
inline ExperimentResult run_fdr_calibration(const ExperimentConfig& config) {
  validate(config);
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.experiment = config.experiment;
  result.config = config;
  std::size_t point_index = 0;
  for (long n : config.n) {
    for (double gamma_sq : config.gamma_sq) {
      for (double kappa : config.kappa) {
        const std::size_t pid = point_index++;
        struct RepOut {
          int status = 0;
          bool corrected_failed = false;
          std::map<InferenceMethod, std::vector<double>> fdp, selected;
        };
        std::vector<RepOut> reps(static_cast<std::size_t>(config.reps));
        parallel_for(reps.size(), config.jobs, [&](std::size_t r) {
          RepOut& out = reps[r];
          const auto sim = detail::simulate(config.features, n, kappa, gamma_sq,
                                            detail::point_seed(config.seed, pid, static_cast<long>(r)));
          std::optional<MleFit> fit;
          try {
            fit = fit_mle(sim.train);
            if (!fit->converged()) throw Error(ErrorCode::NotConverged, "fit did not converge");
          } catch (const Error& e) {
            if (e.category() != ErrorCategory::Numerical) throw;
            out.status = e.code() == ErrorCode::SeparableData ? 1 : 2;
            return;
          }
          const auto null_start = static_cast<std::size_t>(make_beta_null_start(sim.train.d()));
          auto record = [&](InferenceMethod m, const InferenceReport& rep) {
            std::vector<double> p;
            for (const auto& c : rep.coefficients) p.push_back(c.p_value);
            for (double q : config.q_grid) {
              const auto sel = bh_procedure(p, q);
              const auto false_hits = std::count_if(sel.begin(), sel.end(),
                                                    [&](std::size_t j) { return j >= null_start; });
              out.fdp[m].push_back(sel.empty() ? 0.0 : double(false_hits) / double(sel.size()));
              out.selected[m].push_back(static_cast<double>(sel.size()));
            }
          };
          if (config.has(InferenceMethod::Classical))
            record(InferenceMethod::Classical, classical_inference(*fit, config.level));
          if (config.has(InferenceMethod::Corrected)) {
            try {
              const CorrectionParams params = detail::sloe_params(*fit, sim.train);
              record(InferenceMethod::Corrected, coefficient_inference(*fit, params, config.level));
            } catch (const Error& e) {
              if (e.category() != ErrorCategory::Numerical) throw;
              out.corrected_failed = true;
            }
          }
        });
        for (auto m : {InferenceMethod::Corrected, InferenceMethod::Classical}) {
          if (!config.has(m)) continue;
          for (std::size_t k = 0; k < config.q_grid.size(); ++k) {
            PointResult p = detail::make_point(to_string(m), n, kappa, gamma_sq, config.reps);
            double fdp = 0.0, sel = 0.0;
            for (const RepOut& out : reps) {
              if (out.status == 1) { ++p.dropped_separable; continue; }
              if (out.status == 2 || (m == InferenceMethod::Corrected && out.corrected_failed)) {
                ++p.dropped_solver;
                continue;
              }
              ++p.reps_used;
              fdp += out.fdp.at(m)[k];
              sel += out.selected.at(m)[k];
            }
            p.metrics["q"] = config.q_grid[k];
            if (p.reps_used > 0) {
              p.metrics["mean_fdp"] = fdp / p.reps_used;
              p.metrics["mean_selected"] = sel / p.reps_used;
            }
            result.points.push_back(std::move(p));
          }
        }
      }
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const FrontierTable* table = nullptr) {
  switch (config.experiment) {
    case Experiment::Coverage: return run_coverage(config);
    case Experiment::Bootstrap: return run_bootstrap_baseline(config);
    case Experiment::NullPvalues: return run_null_pvalues(config);
    case Experiment::Convergence: return run_sloe_convergence(config);
    case Experiment::Runtime: return run_runtime(config, table);
    case Experiment::Fdr: return run_fdr_calibration(config);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown experiment");
}

/// Finds the tidy row for (method, n, kappa, gamma_sq[, q]).
inline const PointResult* find_point(const ExperimentResult& r, const std::string& method, long n,
                                     double kappa, double gamma_sq,
                                     std::optional<double> q = std::nullopt) {
  for (const auto& p : r.points) {
    if (p.method != method || p.n != n || std::abs(p.kappa - kappa) > 1e-12 ||
        std::abs(p.gamma_sq - gamma_sq) > 1e-12)
      continue;
    if (q) {
      const auto it = p.metrics.find("q");
      if (it == p.metrics.end() || std::abs(it->second - *q) > 1e-12) continue;
    }
    return &p;
  }
  return nullptr;
}

}  // namespace sloe
