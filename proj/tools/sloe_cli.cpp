// Command-line front end: fit | solve | simulate | frontier.
//
// stdout carries exactly one JSON document on success; on failure a JSON
// error object goes to stderr instead. Exit codes: 0 success, 1 usage,
// 2 data, 3 numerical.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "sloe/dataset.hpp"
#include "sloe/error.hpp"
#include "sloe/frontier_table.hpp"
#include "sloe/inference.hpp"
#include "sloe/logistic_mle.hpp"
#include "sloe/probe_frontier.hpp"
#include "sloe/report_io.hpp"
#include "sloe/simulation.hpp"
#include "sloe/sloe.hpp"
#include "sloe/state_evolution.hpp"

namespace {

using nlohmann::json;

int exit_code(sloe::ErrorCategory c) {
  switch (c) {
    case sloe::ErrorCategory::Usage: return 1;
    case sloe::ErrorCategory::Data: return 2;
    case sloe::ErrorCategory::Numerical: return 3;
  }
  return 3;
}

const char* category_name(sloe::ErrorCategory c) {
  switch (c) {
    case sloe::ErrorCategory::Usage: return "usage";
    case sloe::ErrorCategory::Data: return "data";
    case sloe::ErrorCategory::Numerical: return "numerical";
  }
  return "numerical";
}

int report_error(const std::string& code, const char* category, const std::string& message,
                 std::optional<std::size_t> index, int status) {
  json err{{"code", code}, {"category", category}, {"message", message}};
  if (index) err["index"] = *index;
  json out{{"schema_version", sloe::kReportSchemaVersion}, {"version", SLOE_VERSION}, {"error", err}};
  std::cerr << out.dump(2) << "\n";
  return status;
}

std::optional<sloe::FrontierTable> load_table(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return sloe::FrontierTable::load(path);
}

struct FitArgs {
  std::string data;
  std::string outcome;
  std::string test;
  double level = 0.9;
  std::string covariance = "empirical";
  bool standardize = false;
  bool classical = false;
  bool loo_exact = false;
  std::string frontier;
};

json run_fit(const FitArgs& a) {
  sloe::require(a.level > 0.0 && a.level < 1.0, "--level must lie in (0,1)");
  const sloe::Dataset data = sloe::load_csv(a.data, a.outcome, a.standardize);
  // A single outcome class leaves nothing to estimate; with an intercept-like
  // column it is separable outright, and without one the fit is uninformative.
  const double positives = data.outcomes().sum();
  if (positives == 0.0 || positives == static_cast<double>(data.n()))
    throw sloe::Error(sloe::ErrorCode::SeparableData,
                      "outcome column takes a single value; the model is degenerate");
  const sloe::MleFit fit = sloe::fit_mle(data);
  if (!fit.converged())
    throw sloe::Error(sloe::ErrorCode::NotConverged, "Newton iterations did not converge");

  const sloe::SignalStrength signal =
      a.loo_exact ? sloe::corrupted_signal_strength(sloe::loo_logits_exact(data, fit),
                                                    sloe::SignalMethod::LooExact)
                  : sloe::estimate_sloe(fit, data);
  const auto table = load_table(a.frontier);
  sloe::SolverOptions so;
  if (table) so.frontier = &*table;
  const sloe::CorrectionParams params = sloe::solve_eta(data.kappa(), std::sqrt(signal.eta_sq), so);

  std::optional<sloe::FeatureScaling> scaling;
  if (a.covariance == "empirical") scaling = sloe::FeatureScaling::empirical(data.features());
  const sloe::FeatureScaling* sc = scaling ? &*scaling : nullptr;
  sloe::InferenceReport corrected =
      sloe::coefficient_inference(fit, params, a.level, sc, data.column_names());

  std::optional<sloe::InferenceReport> classical;
  if (a.classical) classical = sloe::classical_inference(fit, a.level, data.column_names());
  if (!a.test.empty()) {
    sloe::Dataset raw_test = sloe::load_csv(a.test, a.outcome, false);
    sloe::require(raw_test.d() == data.d(), "test CSV must have the same feature columns as the data");
    sloe::MatrixXd x = raw_test.features();
    if (data.standardized())
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        x.col(j) = (x.col(j).array() - data.column_center()[j]) / data.column_scale()[j];
    corrected.predictions = sloe::prediction_intervals(fit, params, x, a.level, sc);
    if (classical) classical->predictions = sloe::classical_prediction_intervals(fit, x, a.level);
  }

  json out = sloe::report_header("fit");
  out["input"] = {{"data", a.data},           {"outcome", a.outcome},   {"test", a.test},
                  {"level", a.level},         {"covariance", a.covariance},
                  {"standardize", a.standardize}, {"loo_exact", a.loo_exact}};
  out["data"] = {{"n", data.n()}, {"d", data.d()}, {"kappa", data.kappa()}};
  out["mle"] = {{"iterations", fit.iterations()},
                {"grad_norm", fit.grad_norm()},
                {"log_likelihood", fit.log_likelihood()}};
  out["signal_strength"] = sloe::to_json(signal);
  out["params"] = sloe::to_json(params);
  out["corrected"] = sloe::to_json(corrected);
  if (data.standardized()) {
    json raw = json::array();
    for (const auto& c : sloe::to_raw_units(corrected, data).coefficients) raw.push_back(sloe::to_json(c));
    out["corrected_raw_units"] = raw;
  }
  if (classical) out["classical"] = sloe::to_json(*classical);
  return out;
}

struct SolveArgs {
  double kappa = 0.0;
  std::optional<double> gamma;
  std::optional<double> eta;
  int quad_order = 60;
  double tol = 1e-9;
  bool no_existence_check = false;
  std::string frontier;
};

json run_solve(const SolveArgs& a) {
  sloe::require(a.gamma.has_value() != a.eta.has_value(), "exactly one of --gamma and --eta is required");
  const auto table = load_table(a.frontier);
  sloe::SolverOptions so;
  so.quad_order = a.quad_order;
  so.tol = a.tol;
  so.check_existence = !a.no_existence_check;
  if (table) so.frontier = &*table;
  const sloe::CorrectionParams p =
      a.gamma ? sloe::solve_gamma(a.kappa, *a.gamma, so) : sloe::solve_eta(a.kappa, *a.eta, so);
  json out = sloe::report_header("solve");
  out["input"] = {{"kappa", a.kappa}, {"quad_order", a.quad_order}, {"tol", a.tol}};
  if (a.gamma) out["input"]["gamma"] = *a.gamma;
  if (a.eta) out["input"]["eta"] = *a.eta;
  out["params"] = sloe::to_json(p);
  return out;
}

struct SimulateArgs {
  std::string config;
  std::string out;
  int jobs = -1;
  bool plot_data = false;
  std::string frontier;
};

void print_summary(const sloe::ExperimentResult& r) {
  std::cerr << to_string(r.experiment) << ": " << r.points.size() << " rows, "
            << std::fixed << std::setprecision(1) << r.wall_seconds << " s\n";
  for (const auto& p : r.points) {
    std::cerr << "  " << std::left << std::setw(15) << p.method << " n=" << p.n
              << " kappa=" << std::setprecision(3) << p.kappa << " gamma_sq=" << p.gamma_sq
              << " used=" << p.reps_used << "/" << p.reps_total;
    if (p.terminated) std::cerr << " (terminated)";
    for (const auto& [k, v] : p.metrics) std::cerr << " " << k << "=" << std::setprecision(4) << v;
    std::cerr << "\n";
  }
}

json run_simulate(const SimulateArgs& a) {
  sloe::ExperimentConfig config = sloe::load_config(a.config);
  if (a.jobs >= 0) config.jobs = a.jobs;
  if (a.plot_data) config.keep_raw = true;
  const auto table = load_table(a.frontier);
  const sloe::ExperimentResult result = sloe::run_experiment(config, table ? &*table : nullptr);
  const std::string prefix =
      a.out.empty() ? std::filesystem::path(a.config).stem().string() : a.out;
  const json report = sloe::to_json(result);
  sloe::write_file_atomic(prefix + ".json", report.dump(2) + "\n");
  std::ostringstream csv;
  sloe::write_tidy_csv(csv, result);
  sloe::write_file_atomic(prefix + ".csv", csv.str());
  print_summary(result);
  json out = report;
  out["outputs"] = {prefix + ".json", prefix + ".csv"};
  return out;
}

struct FrontierArgs {
  std::vector<double> gamma_grid{0.05, 0.25, 0.5, 0.75, 1, 1.25, 1.5, 2, 2.5, 3, 4, 5, 7, 10};
  long n_sim = 1000;
  long reps = 40;
  std::uint64_t seed = 20261014;
  int jobs = 1;
  std::string out;
  std::string table;
  std::string probe;
  std::string outcome;
  int subsample_reps = 11;
  bool standardize = false;
};

json table_json(const sloe::FrontierTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows()) rows.push_back({{"gamma", r.gamma}, {"kappa_star", r.kappa_star}});
  return {{"provenance", to_string(t.provenance())}, {"n_sim", t.n_sim()}, {"reps", t.reps()},
          {"seed", t.seed()}, {"rows", rows}};
}

json run_frontier(const FrontierArgs& a) {
  json out = sloe::report_header("frontier");
  if (!a.probe.empty()) {
    sloe::require(!a.outcome.empty(), "--outcome is required with --probe");
    const auto loaded = load_table(a.table);
    const sloe::FrontierTable& table = loaded ? *loaded : sloe::default_frontier();
    const sloe::Dataset data = sloe::load_csv(a.probe, a.outcome, a.standardize);
    sloe::ProbeOptions po;
    po.subsample_reps = a.subsample_reps;
    const sloe::SignalStrength s = sloe::probe_frontier_gamma(data, table, a.seed, po);
    out["data"] = {{"n", data.n()}, {"d", data.d()}, {"kappa", data.kappa()}};
    out["signal_strength"] = sloe::to_json(s);
    out["table"] = table_json(table);
    return out;
  }
  sloe::FrontierBuildOptions opts;
  opts.jobs = a.jobs;
  const sloe::FrontierTable t = sloe::build_frontier(a.gamma_grid, a.n_sim, a.reps, a.seed, opts);
  if (!a.out.empty()) {
    std::ostringstream csv;
    t.write_csv(csv);
    sloe::write_file_atomic(a.out, csv.str());
    out["output"] = a.out;
  }
  out["table"] = table_json(t);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dimensionality-corrected inference for high-dimensional logistic regression"};
  app.set_version_flag("--version", SLOE_VERSION);
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a logistic model to a CSV file and report corrected inference");
  fit_cmd->add_option("data", fit.data, "CSV with a header row")->required();
  fit_cmd->add_option("--outcome", fit.outcome, "Name of the 0/1 outcome column")->required();
  fit_cmd->add_option("--level", fit.level, "Confidence level in (0,1)")->capture_default_str();
  fit_cmd->add_option("--covariance", fit.covariance, "Feature covariance model")
      ->check(CLI::IsMember({"identity", "empirical"}))
      ->capture_default_str();
  fit_cmd->add_option("--test", fit.test, "CSV of test inputs for prediction intervals");
  fit_cmd->add_flag("--standardize", fit.standardize, "Center and scale features before fitting");
  fit_cmd->add_flag("--classical", fit.classical, "Also report classical Wald inference");
  fit_cmd->add_flag("--loo-exact", fit.loo_exact, "Estimate eta from exact leave-one-out refits");
  fit_cmd->add_option("--frontier", fit.frontier, "Frontier table CSV (default: built-in)");

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "Solve the state-evolution system");
  solve_cmd->add_option("--kappa", solve.kappa, "Aspect ratio d/n")->required();
  auto* g = solve_cmd->add_option("--gamma", solve.gamma, "Signal strength gamma");
  auto* e = solve_cmd->add_option("--eta", solve.eta, "Corrupted signal strength eta");
  g->excludes(e);
  solve_cmd->add_option("--quad-order", solve.quad_order, "Gauss-Hermite nodes per axis")->capture_default_str();
  solve_cmd->add_option("--tol", solve.tol, "Residual tolerance")->capture_default_str();
  solve_cmd->add_flag("--no-existence-check", solve.no_existence_check,
                      "Skip the frontier check before solving");
  solve_cmd->add_option("--frontier", solve.frontier, "Frontier table CSV (default: built-in)");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation experiment from a config file");
  sim_cmd->add_option("config", sim.config, "key = value config file")->required();
  sim_cmd->add_option("--out", sim.out, "Output prefix for .json and .csv (default: config name)");
  sim_cmd->add_option("--jobs", sim.jobs, "Worker threads (0: all cores)");
  sim_cmd->add_flag("--plot-data", sim.plot_data, "Retain per-rep rows in the JSON output");
  sim_cmd->add_option("--frontier", sim.frontier, "Frontier table CSV (default: built-in)");

  FrontierArgs fr;
  auto* fr_cmd = app.add_subcommand("frontier", "Build a separability frontier table, or probe a dataset");
  fr_cmd->add_option("--gamma-grid", fr.gamma_grid, "Ascending gamma values")->delimiter(',');
  fr_cmd->add_option("--n-sim", fr.n_sim, "Rows per simulated dataset")->capture_default_str();
  fr_cmd->add_option("--reps", fr.reps, "Datasets per bisection step")->capture_default_str();
  fr_cmd->add_option("--seed", fr.seed, "Random seed")->capture_default_str();
  fr_cmd->add_option("--jobs", fr.jobs, "Worker threads (0: all cores)")->capture_default_str();
  fr_cmd->add_option("--out", fr.out, "Write the table CSV here");
  fr_cmd->add_option("--table", fr.table, "Frontier table for --probe (default: built-in)");
  fr_cmd->add_option("--probe", fr.probe, "Estimate signal strength of this CSV by subsampling");
  fr_cmd->add_option("--outcome", fr.outcome, "Outcome column for --probe");
  fr_cmd->add_option("--subsample-reps", fr.subsample_reps, "Subsamples per probed size")->capture_default_str();
  fr_cmd->add_flag("--standardize", fr.standardize, "Standardize features of --probe data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("UsageError", "usage", e.what(), std::nullopt, 1);
  }

  try {
    json out;
    if (*fit_cmd) out = run_fit(fit);
    else if (*solve_cmd) out = run_solve(solve);
    else if (*sim_cmd) out = run_simulate(sim);
    else out = run_frontier(fr);
    std::cout << out.dump(2) << "\n";
    return 0;
  } catch (const sloe::Error& e) {
    return report_error(std::string(to_string(e.code())), category_name(e.category()), e.what(),
                        e.index(), exit_code(e.category()));
  } catch (const std::exception& e) {
    return report_error("InternalError", "numerical", e.what(), std::nullopt, 3);
  }
}
