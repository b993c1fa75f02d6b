#pragma once

#include "sloe/frontier_table.hpp"

namespace sloe {

/// Built-in separability frontier, generated by
///   sloe frontier --n-sim 1000 --reps 40 --seed 20261014
/// on the default gamma grid and also shipped as data/frontier_default.csv.
inline const FrontierTable& default_frontier() {
  static const FrontierTable table(
      {
          {0.05, 0.497},
          {0.25, 0.496999},
          {0.5, 0.4815},
          {0.75, 0.4645},
          {1, 0.4355},
          {1.25, 0.4155},
          {1.5, 0.3865},
          {2, 0.3445},
          {2.5, 0.3075},
          {3, 0.2735},
          {4, 0.2245},
          {5, 0.1865},
          {7, 0.1385},
          {10, 0.0995},
      },
      FrontierProvenance::MonteCarlo, 1000, 40, 20261014);
  return table;
}

}  // namespace sloe
