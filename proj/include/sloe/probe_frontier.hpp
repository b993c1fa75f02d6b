#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "sloe/dataset.hpp"
#include "sloe/error.hpp"
#include "sloe/frontier_table.hpp"
#include "sloe/generators.hpp"
#include "sloe/parallel.hpp"
#include "sloe/random.hpp"
#include "sloe/separability.hpp"
#include "sloe/sloe.hpp"
#include "sloe/state_evolution.hpp"

namespace sloe {

namespace detail {

// Least-squares projection onto non-increasing sequences (pool adjacent
// violators), followed by a tiny tie-break so the result is strictly
// decreasing.
inline std::vector<double> isotonic_decreasing(const std::vector<double>& values) {
  struct Block {
    double sum;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (double v : values) {
    blocks.push_back({v, 1});
    while (blocks.size() >= 2) {
      const Block& b = blocks.back();
      const Block& a = blocks[blocks.size() - 2];
      if (a.sum / a.count >= b.sum / b.count) break;
      const Block merged{a.sum + b.sum, a.count + b.count};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const Block& b : blocks)
    for (std::size_t k = 0; k < b.count; ++k) out.push_back(b.sum / b.count);
  constexpr double kTieStep = 1e-6;
  for (std::size_t i = 1; i < out.size(); ++i)
    if (!(out[i] < out[i - 1])) out[i] = out[i - 1] - kTieStep;
  return out;
}

}  // namespace detail

struct FrontierBuildOptions {
  double kappa_min = 0.005;
  double kappa_max = 0.6;
  int jobs = 1;
};

/// Monte-Carlo frontier: for each gamma, bisection on the number of features
/// d of an n_sim-row Gaussian design for the point where at least half of the
/// `reps` simulated datasets are separable. The same random streams are used
/// at every d so the empirical frequency varies smoothly along the search.
inline FrontierTable build_frontier(const std::vector<double>& gamma_grid, long n_sim, long reps,
                                    std::uint64_t seed, const FrontierBuildOptions& opts = {}) {
  require(!gamma_grid.empty(), "build_frontier: empty gamma grid");
  for (std::size_t k = 0; k < gamma_grid.size(); ++k)
    require(gamma_grid[k] > 0.0 && (k == 0 || gamma_grid[k] > gamma_grid[k - 1]),
            "build_frontier: gamma grid must be positive and ascending");
  require(n_sim >= 20 && reps >= 1, "build_frontier: need n_sim >= 20 and reps >= 1");
  require(opts.kappa_min > 0.0 && opts.kappa_min < opts.kappa_max && opts.kappa_max < 1.0,
          "build_frontier: invalid kappa bracket");

  const auto n = static_cast<Eigen::Index>(n_sim);
  auto separated_fraction = [&](std::size_t k, Eigen::Index d) {
    std::vector<char> separated(static_cast<std::size_t>(reps), 0);
    parallel_for(static_cast<std::size_t>(reps), opts.jobs, [&](std::size_t r) {
      const std::uint64_t stream = derive_seed(seed, k * 1000003ULL + r);
      const MatrixXd x = gen_gaussian(n, d, derive_seed(stream, 1));
      VectorXd beta = make_beta(d, gamma_grid[k]);
      // Exact signal strength even when the block sizes are floored.
      if (beta.norm() > 0.0) beta *= gamma_grid[k] / beta.norm();
      const VectorXd y = gen_outcomes(x, beta, derive_seed(stream, 2)).outcomes;
      separated[r] = separability_lp(x, y).separable ? 1 : 0;
    });
    return static_cast<double>(std::count(separated.begin(), separated.end(), 1)) /
           static_cast<double>(reps);
  };

  std::vector<double> raw;
  raw.reserve(gamma_grid.size());
  for (std::size_t k = 0; k < gamma_grid.size(); ++k) {
    Eigen::Index lo = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(opts.kappa_min * n)));
    Eigen::Index hi = static_cast<Eigen::Index>(std::ceil(opts.kappa_max * n));
    double kappa_star;
    if (separated_fraction(k, lo) >= 0.5) {
      kappa_star = static_cast<double>(lo) / n;
    } else if (separated_fraction(k, hi) < 0.5) {
      kappa_star = static_cast<double>(hi) / n;
    } else {
      // Invariant: fraction(lo) < 1/2 <= fraction(hi).
      while (hi - lo > 1) {
        const Eigen::Index mid = lo + (hi - lo) / 2;
        (separated_fraction(k, mid) >= 0.5 ? hi : lo) = mid;
      }
      kappa_star = (static_cast<double>(lo) + static_cast<double>(hi)) / (2.0 * n);
    }
    raw.push_back(kappa_star);
  }
  const std::vector<double> smooth = detail::isotonic_decreasing(raw);
  std::vector<FrontierRow> rows;
  for (std::size_t k = 0; k < gamma_grid.size(); ++k) rows.push_back({gamma_grid[k], smooth[k]});
  return FrontierTable(std::move(rows), FrontierProvenance::MonteCarlo, n_sim, reps, seed);
}

namespace detail {

// First `size` entries of a uniformly random permutation of 0..n-1.
inline std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index size,
                                                            Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < size; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(size));
  return idx;
}

}  // namespace detail

struct ProbeOptions {
  int subsample_reps = 11;
  SolverOptions solver;
};

/// Signal-strength estimate from the subsample size at which the data become
/// separable. Subsample sizes are searched in [2d, n]: below 2d the
/// zero-signal frontier already predicts separation.
inline SignalStrength probe_frontier_gamma(const Dataset& data, const FrontierTable& table,
                                           std::uint64_t seed, const ProbeOptions& opts = {}) {
  require(opts.subsample_reps >= 1, "probe_frontier_gamma: subsample_reps must be >= 1");
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();
  if (check_separable(data))
    throw Error(ErrorCode::AlreadySeparable, "probe_frontier_gamma: full data are already separable");
  if (n <= 2 * d)
    throw Error(ErrorCode::FrontierOutOfRange,
                "probe_frontier_gamma: aspect ratio at or above 1/2 leaves no room to subsample");

  const MatrixXd& x = data.features();
  const VectorXd& y = data.outcomes();
  const int reps = opts.subsample_reps;
  const int majority = reps / 2 + (reps % 2);  // ceil(reps / 2): frequency >= 1/2
  long lp_calls = 0;
  int probes = 0;

  // Majority vote with early exit once the outcome is decided. The random
  // stream depends only on (seed, size), so results do not depend on the
  // search path.
  auto mostly_separable = [&](Eigen::Index size) {
    ++probes;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(size)));
    int separated = 0;
    for (int r = 0; r < reps; ++r) {
      const auto idx = detail::sample_without_replacement(n, size, rng);
      MatrixXd xs(size, d);
      VectorXd ys(size);
      for (Eigen::Index i = 0; i < size; ++i) {
        xs.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
        ys[i] = y[idx[static_cast<std::size_t>(i)]];
      }
      ++lp_calls;
      if (separability_lp(xs, ys).separable) ++separated;
      if (separated >= majority) return true;
      if (r + 1 - separated > reps - majority) return false;
    }
    return separated >= majority;
  };

  // Invariant: lo is treated as separable, hi is not (the full data).
  Eigen::Index lo = 2 * d;
  Eigen::Index hi = n;
  while (hi - lo > 1) {
    const Eigen::Index mid = lo + (hi - lo) / 2;
    (mostly_separable(mid) ? lo : hi) = mid;
  }
  const Eigen::Index n_prime = lo;
  const double kappa_hat_star = static_cast<double>(d) / static_cast<double>(n_prime);
  const auto gamma_hat = table.gamma_at(kappa_hat_star);
  if (!gamma_hat)
    throw Error(ErrorCode::FrontierOutOfRange,
                "probe_frontier_gamma: empirical frontier lies beyond the table (signal too strong)");

  CorrectionParams params;
  try {
    SolverOptions solver = opts.solver;
    solver.frontier = &table;
    params = solve_gamma(data.kappa(), *gamma_hat, solver);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::OutsideExistenceRegion) throw;
    throw Error(ErrorCode::FrontierOutOfRange,
                "probe_frontier_gamma: implied signal strength sits on the frontier");
  }

  SignalStrength out;
  out.method = SignalMethod::ProbeFrontier;
  out.eta_sq = params.eta_sq;
  out.diagnostics["gamma_hat"] = *gamma_hat;
  out.diagnostics["gamma_sq_hat"] = *gamma_hat * *gamma_hat;
  out.diagnostics["kappa_star_hat"] = kappa_hat_star;
  out.diagnostics["n_prime"] = static_cast<double>(n_prime);
  out.diagnostics["probes"] = probes;
  out.diagnostics["lp_calls"] = static_cast<double>(lp_calls);
  out.diagnostics["alpha"] = params.alpha;
  out.diagnostics["sigma_star"] = params.sigma_star;
  out.diagnostics["lambda"] = params.lambda;
  return out;
}

}  // namespace sloe
