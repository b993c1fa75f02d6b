#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "sloe/error.hpp"

namespace sloe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SeparabilityResult {
  bool separable = false;
  double infeasibility = 0.0;  // phase-1 objective at termination
  long pivots = 0;
};

namespace detail {

// Decides linear separability of the signed rows z_i = (2y_i - 1) x_i.
//
// Separable (some b with Z b >= 0, Z b != 0) holds iff the primal LP
// max 1'Zb s.t. Zb >= 0, |b|_inf <= 1 has a positive optimum. Its dual is
// feasible with value zero iff there is v >= 1 with Z'v = 0, i.e. the origin
// is a strictly positive combination of the z_i (Gordan's alternative). We
// run phase 1 of the simplex method on {s >= 0 : Z's = -Z'1}: d equality
// rows and m structural columns, so the tableau stays (d+1) x (m+1) even
// when m is much larger than d. Artificial columns are dropped once they
// leave the basis, as they can never re-enter in phase 1.
inline SeparabilityResult separable_by_simplex(const MatrixXd& signed_rows) {
  const Eigen::Index m = signed_rows.rows();
  const Eigen::Index d = signed_rows.cols();
  SeparabilityResult result;
  if (m == 0) return result;

  // Row scaling leaves the cone unchanged and keeps pivots well conditioned.
  MatrixXd z = signed_rows;
  std::vector<bool> keep(static_cast<std::size_t>(m), true);
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double norm = z.row(i).norm();
    if (norm > 0.0) {
      z.row(i) /= norm;
      ++kept;
    } else {
      keep[static_cast<std::size_t>(i)] = false;
    }
  }
  if (kept == 0) return result;  // every row zero: no b gives a strict sign
  if (kept < m) {
    MatrixXd compact(kept, d);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (keep[static_cast<std::size_t>(i)]) compact.row(k++) = z.row(i);
    z = std::move(compact);
  }
  const Eigen::Index cols = z.rows();

  MatrixXd tab(d + 1, cols + 1);
  tab.topLeftCorner(d, cols) = z.transpose();
  tab.block(0, cols, d, 1) = -z.colwise().sum().transpose();
  for (Eigen::Index r = 0; r < d; ++r) {
    if (tab(r, cols) < 0.0) tab.row(r) *= -1.0;
  }
  // Reduced costs of the phase-1 objective (sum of artificials).
  tab.row(d) = -tab.topRows(d).colwise().sum();

  const double rhs_scale = 1.0 + tab.block(0, cols, d, 1).sum();
  const double feas_tol = 1e-9 * rhs_scale;
  constexpr double kCostTol = 1e-10;
  constexpr double kPivotTol = 1e-9;

  // basis[r] < cols: structural column; basis[r] >= cols: artificial.
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(d));
  for (Eigen::Index r = 0; r < d; ++r) basis[static_cast<std::size_t>(r)] = cols + r;
  std::vector<bool> in_basis(static_cast<std::size_t>(cols), false);

  const long max_pivots = 50L * static_cast<long>(cols + d) + 1000L;
  long degenerate_run = 0;
  bool bland = false;
  VectorXd pivot_col(d + 1);
  Eigen::RowVectorXd pivot_row(cols + 1);

  while (result.pivots < max_pivots) {
    if (-tab(d, cols) <= feas_tol) break;  // objective reached zero

    Eigen::Index enter = -1;
    double best = -kCostTol;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (in_basis[static_cast<std::size_t>(j)]) continue;
      const double c = tab(d, j);
      if (c < best) {
        enter = j;
        if (bland) break;
        best = c;
      }
    }
    if (enter < 0) break;  // optimal for phase 1

    Eigen::Index leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < d; ++r) {
      const double a = tab(r, enter);
      if (a <= kPivotTol) continue;
      const double ratio = tab(r, cols) / a;
      if (ratio < best_ratio - 1e-14 ||
          (ratio <= best_ratio + 1e-14 && leave >= 0 &&
           basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)])) {
        best_ratio = ratio;
        leave = r;
      }
    }
    if (leave < 0) {
      // Unbounded direction cannot occur for phase 1; treat the column as
      // unusable and continue pricing with Bland's rule.
      tab(d, enter) = 0.0;
      bland = true;
      continue;
    }

    if (best_ratio <= 1e-14) {
      if (++degenerate_run > 50) bland = true;
    } else {
      degenerate_run = 0;
    }

    const double piv = tab(leave, enter);
    pivot_row = tab.row(leave) / piv;
    pivot_col = tab.col(enter);
    tab.noalias() -= pivot_col * pivot_row;
    tab.row(leave) = pivot_row;
    tab(leave, cols) = std::max(tab(leave, cols), 0.0);

    const auto old = basis[static_cast<std::size_t>(leave)];
    if (old < cols) in_basis[static_cast<std::size_t>(old)] = false;
    basis[static_cast<std::size_t>(leave)] = enter;
    in_basis[static_cast<std::size_t>(enter)] = true;
    ++result.pivots;
  }

  double infeasibility = 0.0;
  for (Eigen::Index r = 0; r < d; ++r)
    if (basis[static_cast<std::size_t>(r)] >= cols) infeasibility += std::max(tab(r, cols), 0.0);
  result.infeasibility = infeasibility;
  result.separable = infeasibility > feas_tol;
  return result;
}

}  // namespace detail

/// Exact separability of (features, outcomes), restricted to rows with a
/// positive weight when weights are supplied.
inline SeparabilityResult separability_lp(const MatrixXd& features, const VectorXd& outcomes,
                                          const VectorXd* weights = nullptr) {
  require(features.rows() == outcomes.size(), "separability: dimension mismatch");
  Eigen::Index m = 0;
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    if (!weights || (*weights)[i] > 0.0) ++m;
  MatrixXd z(m, features.cols());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (weights && !((*weights)[i] > 0.0)) continue;
    z.row(k++) = (outcomes[i] > 0.5 ? 1.0 : -1.0) * features.row(i);
  }
  return detail::separable_by_simplex(z);
}

}  // namespace sloe
