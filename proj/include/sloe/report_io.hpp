#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sloe/error.hpp"
#include "sloe/inference.hpp"
#include "sloe/simulation.hpp"
#include "sloe/sloe.hpp"
#include "sloe/state_evolution.hpp"

#ifndef SLOE_VERSION
#define SLOE_VERSION "0.1.0"
#endif

namespace sloe {

inline constexpr int kReportSchemaVersion = 1;

using nlohmann::json;

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const CorrectionParams& p) {
  return {{"kappa", p.kappa},
          {"alpha", p.alpha},
          {"sigma_star", p.sigma_star},
          {"lambda", p.lambda},
          {"gamma_sq", p.gamma_sq},
          {"eta_sq", p.eta_sq},
          {"residuals", {p.residuals[0], p.residuals[1], p.residuals[2]}},
          {"residual_norm", p.residual_norm},
          {"iterations", p.iterations}};
}

inline json to_json(const SignalStrength& s) {
  json j{{"eta_sq", s.eta_sq}, {"method", to_string(s.method)}};
  json diag = json::object();
  for (const auto& [k, v] : s.diagnostics) diag[k] = finite_or_null(v);
  j["diagnostics"] = diag;
  return j;
}

inline json to_json(const CoefficientRecord& r) {
  return {{"name", r.name},         {"beta_hat", r.beta_hat}, {"beta_debiased", r.beta_debiased},
          {"se", r.se},             {"ci_lo", r.ci_lo},       {"ci_hi", r.ci_hi},
          {"z", r.z},               {"p_value", r.p_value}};
}

inline json to_json(const PredictionRecord& r) {
  return {{"logit_hat", r.logit_hat},     {"logit_debiased", r.logit_debiased},
          {"logit_se", r.logit_se},       {"logit_ci", {r.logit_ci_lo, r.logit_ci_hi}},
          {"prob_hat", r.prob_hat},       {"prob_ci", {r.prob_ci_lo, r.prob_ci_hi}}};
}

inline json to_json(const InferenceReport& r) {
  json j{{"method", to_string(r.method)}, {"level", r.level}};
  j["coefficients"] = json::array();
  for (const auto& c : r.coefficients) j["coefficients"].push_back(to_json(c));
  if (!r.predictions.empty()) {
    j["predictions"] = json::array();
    for (const auto& p : r.predictions) j["predictions"].push_back(to_json(p));
  }
  if (r.params) j["params"] = to_json(*r.params);
  return j;
}

inline json to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  return {{"experiment", to_string(c.experiment)},
          {"n", c.n},
          {"kappa", c.kappa},
          {"gamma_sq", c.gamma_sq},
          {"features", to_string(c.features)},
          {"reps", c.reps},
          {"level", c.level},
          {"methods", methods},
          {"seed", c.seed},
          {"jobs", c.jobs},
          {"test_size", c.test_size},
          {"bootstrap_b", c.bootstrap_b},
          {"q_grid", c.q_grid},
          {"stop_separable_fraction", c.stop_separable_fraction},
          {"scaling", c.scaling == FeatureScaling::Kind::Identity ? "identity" : "empirical"},
          {"probe_reps", c.probe_reps},
          {"keep_raw", c.keep_raw}};
}

inline json to_json(const PointResult& p) {
  json metrics = json::object();
  for (const auto& [k, v] : p.metrics) metrics[k] = finite_or_null(v);
  return {{"method", p.method},
          {"n", p.n},
          {"kappa", p.kappa},
          {"gamma_sq", p.gamma_sq},
          {"reps_total", p.reps_total},
          {"reps_used", p.reps_used},
          {"dropped_separable", p.dropped_separable},
          {"dropped_solver", p.dropped_solver},
          {"terminated", p.terminated},
          {"metrics", metrics}};
}

inline json report_header(const std::string& command) {
  return {{"schema_version", kReportSchemaVersion}, {"version", SLOE_VERSION}, {"command", command}};
}

inline json to_json(const ExperimentResult& r) {
  json j = report_header("simulate");
  j["config"] = to_json(r.config);
  j["seed"] = r.config.seed;
  j["wall_seconds"] = r.wall_seconds;
  j["points"] = json::array();
  for (const auto& p : r.points) j["points"].push_back(to_json(p));
  if (!r.samples.empty()) j["samples"] = r.samples;
  if (!r.raw.empty()) {
    j["raw"] = json::array();
    for (const auto& row : r.raw) {
      json o = json::object();
      for (const auto& [k, v] : row) o[k] = finite_or_null(v);
      j["raw"].push_back(o);
    }
  }
  return j;
}

/// Tidy CSV: one row per grid point per method. Metric columns are the
/// sorted union of metric names; absent values are empty cells. Timing
/// metrics are written only when `include_timing` is set so repeated runs
/// can be compared byte for byte.
inline void write_tidy_csv(std::ostream& out, const ExperimentResult& r, bool include_timing = true) {
  auto is_timing = [](const std::string& k) {
    return k.find("seconds") != std::string::npos || k.find("speedup") != std::string::npos;
  };
  std::set<std::string> keys;
  for (const auto& p : r.points)
    for (const auto& [k, v] : p.metrics)
      if (include_timing || !is_timing(k)) keys.insert(k);
  out << "experiment,method,n,kappa,gamma_sq,reps_total,reps_used,dropped_separable,dropped_solver,terminated";
  for (const auto& k : keys) out << "," << k;
  out << "\n";
  std::ostringstream cell;
  cell.precision(10);
  for (const auto& p : r.points) {
    out << to_string(r.experiment) << "," << p.method << "," << p.n << ",";
    cell.str("");
    cell << p.kappa << "," << p.gamma_sq;
    out << cell.str() << "," << p.reps_total << "," << p.reps_used << "," << p.dropped_separable << ","
        << p.dropped_solver << "," << (p.terminated ? 1 : 0);
    for (const auto& k : keys) {
      out << ",";
      const auto it = p.metrics.find(k);
      if (it != p.metrics.end() && std::isfinite(it->second)) {
        cell.str("");
        cell << it->second;
        out << cell.str();
      }
    }
    out << "\n";
  }
}

/// Writes via a sibling temporary file and rename, so readers never see a
/// partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::FileNotFound, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::FileNotFound, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::FileNotFound, "cannot move result into '" + path.string() + "'");
  }
}

}  // namespace sloe
