#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sloe/error.hpp"

namespace sloe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Feature matrix and binary outcomes. Immutable once constructed; the
/// constructor enforces finiteness and {0,1} outcomes.
class Dataset {
 public:
  Dataset(MatrixXd features, VectorXd outcomes,
          std::vector<std::string> column_names = {})
      : features_(std::move(features)),
        outcomes_(std::move(outcomes)),
        column_names_(std::move(column_names)) {
    validate();
  }

  const MatrixXd& features() const noexcept { return features_; }
  const VectorXd& outcomes() const noexcept { return outcomes_; }
  const std::vector<std::string>& column_names() const noexcept { return column_names_; }

  Eigen::Index n() const noexcept { return features_.rows(); }
  Eigen::Index d() const noexcept { return features_.cols(); }
  double kappa() const noexcept {
    return static_cast<double>(d()) / static_cast<double>(n());
  }

  bool standardized() const noexcept { return standardized_; }
  /// Column means and scales removed by standardize(); empty otherwise.
  const VectorXd& column_center() const noexcept { return center_; }
  const VectorXd& column_scale() const noexcept { return scale_; }

  friend Dataset standardize(const Dataset& data);

 private:
  void validate() const {
    require(features_.rows() >= 1 && features_.cols() >= 1,
            "Dataset: need n >= 1 and d >= 1");
    require(outcomes_.size() == features_.rows(),
            "Dataset: outcome length does not match feature rows");
    require(column_names_.empty() ||
                column_names_.size() == static_cast<std::size_t>(features_.cols()),
            "Dataset: column_names length does not match d");
    if (!features_.allFinite())
      throw Error(ErrorCode::ParseError, "Dataset: features contain NaN or Inf");
    for (Eigen::Index i = 0; i < outcomes_.size(); ++i) {
      if (outcomes_[i] != 0.0 && outcomes_[i] != 1.0)
        throw Error(ErrorCode::NonBinaryOutcome,
                    "Dataset: outcome at row " + std::to_string(i) + " is not 0 or 1",
                    static_cast<std::size_t>(i));
    }
  }

  MatrixXd features_;
  VectorXd outcomes_;
  std::vector<std::string> column_names_;
  bool standardized_ = false;
  VectorXd center_;
  VectorXd scale_;
};

/// Centers each column and scales it to unit (divide-by-n) variance.
/// Constant columns are rejected.
inline Dataset standardize(const Dataset& data) {
  const Eigen::Index n = data.n();
  MatrixXd x = data.features();
  VectorXd center(data.d());
  VectorXd scale(data.d());
  for (Eigen::Index j = 0; j < data.d(); ++j) {
    auto col = x.col(j);
    const double mean = col.mean();
    col.array() -= mean;
    const double var = col.squaredNorm() / static_cast<double>(n);
    if (!(var > 1e-24 * (1.0 + mean * mean))) {
      const std::string name = data.column_names().empty()
                                   ? std::to_string(j)
                                   : data.column_names()[static_cast<std::size_t>(j)];
      throw Error(ErrorCode::ConstantColumn,
                  "standardize: column '" + name + "' is constant",
                  static_cast<std::size_t>(j));
    }
    const double sd = std::sqrt(var);
    col /= sd;
    center[j] = mean;
    scale[j] = sd;
  }
  Dataset out(std::move(x), data.outcomes(), data.column_names());
  out.standardized_ = true;
  if (data.standardized()) {
    // Compose with the earlier transform so raw-unit back-transformation
    // stays exact.
    out.center_ = data.column_center() + data.column_scale().cwiseProduct(center);
    out.scale_ = data.column_scale().cwiseProduct(scale);
  } else {
    out.center_ = std::move(center);
    out.scale_ = std::move(scale);
  }
  return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(first, last - first + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"')
    out = out.substr(1, out.size() - 2);
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string_view rest(line);
  while (true) {
    const auto comma = rest.find(',');
    cells.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t line_no,
                         const std::string& column) {
  const std::string where = " at line " + std::to_string(line_no) + ", column '" + column + "'";
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "?")
    throw Error(ErrorCode::MissingValue, "load_csv: missing value" + where);
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value))
    throw Error(ErrorCode::ParseError, "load_csv: non-numeric cell '" + cell + "'" + where);
  return value;
}

}  // namespace detail

/// Reads a comma-separated file with a header row. The outcome column is
/// selected by name and removed from the features.
inline Dataset load_csv(const std::string& path, const std::string& outcome_column,
                        bool standardize_columns) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::ParseError, "load_csv: '" + path + "' has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);
  const auto header = detail::split_csv_line(line);

  std::size_t outcome_idx = header.size();
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == outcome_column) {
      if (outcome_idx != header.size())
        throw Error(ErrorCode::ParseError, "load_csv: duplicate outcome column '" + outcome_column + "'");
      outcome_idx = j;
    }
  }
  if (outcome_idx == header.size())
    throw Error(ErrorCode::ParseError, "load_csv: outcome column '" + outcome_column + "' not found");
  if (header.size() < 2)
    throw Error(ErrorCode::ParseError, "load_csv: no feature columns besides the outcome");

  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != outcome_idx) names.push_back(header[j]);

  std::vector<double> values;
  std::vector<double> outcomes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorCode::ParseError, "load_csv: line " + std::to_string(line_no) + " has " +
                                             std::to_string(cells.size()) + " cells, expected " +
                                             std::to_string(header.size()));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const double v = detail::parse_cell(cells[j], line_no, header[j]);
      if (j == outcome_idx) {
        if (v != 0.0 && v != 1.0)
          throw Error(ErrorCode::NonBinaryOutcome,
                      "load_csv: outcome value '" + cells[j] + "' at line " +
                          std::to_string(line_no) + " is not 0 or 1",
                      outcomes.size());
        outcomes.push_back(v);
      } else {
        values.push_back(v);
      }
    }
  }
  if (outcomes.empty()) throw Error(ErrorCode::ParseError, "load_csv: no data rows");

  const auto n = static_cast<Eigen::Index>(outcomes.size());
  const auto d = static_cast<Eigen::Index>(names.size());
  MatrixXd x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, d);
  VectorXd y = Eigen::Map<VectorXd>(outcomes.data(), n);
  Dataset data(std::move(x), std::move(y), std::move(names));
  return standardize_columns ? standardize(data) : data;
}

}  // namespace sloe
