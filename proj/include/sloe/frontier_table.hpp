#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sloe/error.hpp"

namespace sloe {

enum class FrontierProvenance { MonteCarlo, UserSupplied };

inline const char* to_string(FrontierProvenance p) {
  return p == FrontierProvenance::MonteCarlo ? "MONTE_CARLO" : "USER_SUPPLIED";
}

struct FrontierRow {
  double gamma = 0.0;
  double kappa_star = 0.0;
};

/// Tabulated separability frontier kappa_star(gamma): strictly decreasing,
/// linearly interpolated, clamped to the end rows outside the grid.
class FrontierTable {
 public:
  static constexpr int kVersion = 1;

  FrontierTable() = default;
  FrontierTable(std::vector<FrontierRow> rows, FrontierProvenance provenance,
                long n_sim = 0, long reps = 0, std::uint64_t seed = 0)
      : rows_(std::move(rows)), provenance_(provenance), n_sim_(n_sim), reps_(reps), seed_(seed) {
    validate();
  }

  const std::vector<FrontierRow>& rows() const noexcept { return rows_; }
  FrontierProvenance provenance() const noexcept { return provenance_; }
  long n_sim() const noexcept { return n_sim_; }
  long reps() const noexcept { return reps_; }
  std::uint64_t seed() const noexcept { return seed_; }
  bool empty() const noexcept { return rows_.empty(); }

  double kappa_star(double gamma) const {
    require(!rows_.empty(), "FrontierTable: empty table");
    if (gamma <= rows_.front().gamma) return rows_.front().kappa_star;
    if (gamma >= rows_.back().gamma) return rows_.back().kappa_star;
    const auto it = std::upper_bound(rows_.begin(), rows_.end(), gamma,
                                     [](double g, const FrontierRow& r) { return g < r.gamma; });
    const FrontierRow& hi = *it;
    const FrontierRow& lo = *(it - 1);
    const double t = (gamma - lo.gamma) / (hi.gamma - lo.gamma);
    return lo.kappa_star + t * (hi.kappa_star - lo.kappa_star);
  }

  /// gamma with kappa_star(gamma) = kappa; aspect ratios above the first
  /// row map to the first gamma, below the last row give nullopt.
  std::optional<double> gamma_at(double kappa) const {
    require(!rows_.empty(), "FrontierTable: empty table");
    if (kappa >= rows_.front().kappa_star) return rows_.front().gamma;
    if (kappa < rows_.back().kappa_star) return std::nullopt;
    for (std::size_t i = 1; i < rows_.size(); ++i) {
      const FrontierRow& lo = rows_[i - 1];
      const FrontierRow& hi = rows_[i];
      if (kappa <= lo.kappa_star && kappa >= hi.kappa_star) {
        const double t = (lo.kappa_star - kappa) / (lo.kappa_star - hi.kappa_star);
        return lo.gamma + t * (hi.gamma - lo.gamma);
      }
    }
    return rows_.back().gamma;
  }

  /// True when (kappa, gamma) lies strictly inside the non-separable region
  /// with a relative safety margin.
  bool inside(double kappa, double gamma, double margin = 0.02) const {
    return kappa > 0.0 && kappa < (1.0 - margin) * kappa_star(gamma);
  }

  void write_csv(std::ostream& out) const {
    out << "# frontier version=" << kVersion << " provenance=" << to_string(provenance_)
        << " n_sim=" << n_sim_ << " reps=" << reps_ << " seed=" << seed_ << "\n";
    out << "gamma,kappa_star\n";
    out.precision(10);
    for (const auto& r : rows_) out << r.gamma << "," << r.kappa_star << "\n";
  }

  static FrontierTable read_csv(std::istream& in) {
    std::string line;
    std::vector<FrontierRow> rows;
    FrontierProvenance provenance = FrontierProvenance::UserSupplied;
    long n_sim = 0, reps = 0;
    std::uint64_t seed = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        std::istringstream meta(line.substr(1));
        std::string token;
        while (meta >> token) {
          const auto eq = token.find('=');
          if (eq == std::string::npos) continue;
          const std::string key = token.substr(0, eq);
          const std::string value = token.substr(eq + 1);
          if (key == "provenance" && value == "MONTE_CARLO") provenance = FrontierProvenance::MonteCarlo;
          if (key == "n_sim") n_sim = std::stol(value);
          if (key == "reps") reps = std::stol(value);
          if (key == "seed") seed = std::stoull(value);
        }
        continue;
      }
      if (!header_seen) {
        if (line != "gamma,kappa_star")
          throw Error(ErrorCode::ParseError, "frontier table: expected header 'gamma,kappa_star'");
        header_seen = true;
        continue;
      }
      const auto comma = line.find(',');
      if (comma == std::string::npos)
        throw Error(ErrorCode::ParseError, "frontier table: malformed row '" + line + "'");
      try {
        rows.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "frontier table: malformed row '" + line + "'");
      }
    }
    if (!header_seen) throw Error(ErrorCode::ParseError, "frontier table: missing header");
    return FrontierTable(std::move(rows), provenance, n_sim, reps, seed);
  }

  static FrontierTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileNotFound, "cannot open frontier table '" + path + "'");
    return read_csv(in);
  }

 private:
  void validate() const {
    if (rows_.empty()) throw Error(ErrorCode::ParseError, "frontier table: no rows");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto& r = rows_[i];
      if (!(r.gamma >= 0.0) || !(r.kappa_star > 0.0 && r.kappa_star < 1.0))
        throw Error(ErrorCode::ParseError, "frontier table: row out of range");
      if (i > 0 && !(r.gamma > rows_[i - 1].gamma && r.kappa_star < rows_[i - 1].kappa_star))
        throw Error(ErrorCode::ParseError,
                    "frontier table: gamma must ascend and kappa_star strictly decrease");
    }
  }

  std::vector<FrontierRow> rows_;
  FrontierProvenance provenance_ = FrontierProvenance::UserSupplied;
  long n_sim_ = 0;
  long reps_ = 0;
  std::uint64_t seed_ = 0;
};

}  // namespace sloe
