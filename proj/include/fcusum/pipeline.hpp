#pragma once

// Data preparation for the test command and the manifest echoed in reports.

#include <algorithm>
#include <cmath>
#include <ctime>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "fcusum/basis.hpp"
#include "fcusum/cusum.hpp"
#include "fcusum/errors.hpp"
#include "fcusum/io.hpp"

#ifndef FCUSUM_VERSION
#define FCUSUM_VERSION "0.0.0"
#endif

namespace fcusum {

inline constexpr const char* kReportSchema = "fcusum.report/1";

struct IndexRange {
  int first = 1;  ///< 1-based, inclusive
  int last = 1;
};

/// "i..j" with 1 <= i <= j.
inline IndexRange parse_index_range(const std::string& s) {
  const auto dots = s.find("..");
  if (dots == std::string::npos) throw InvalidArgument("range '" + s + "' is not of the form i..j");
  try {
    std::size_t used = 0;
    const int a = std::stoi(s.substr(0, dots), &used);
    if (used != dots) throw InvalidArgument("");
    const std::string rest = s.substr(dots + 2);
    const int b = std::stoi(rest, &used);
    if (used != rest.size()) throw InvalidArgument("");
    if (a < 1 || b < a) throw InvalidArgument("");
    return IndexRange{a, b};
  } catch (const std::exception&) {
    throw InvalidArgument("range '" + s + "' is not of the form i..j with 1 <= i <= j");
  }
}

struct SmoothSpec {
  int size = 25;
  int order = 4;
};

/// "J:order".
inline SmoothSpec parse_smooth_spec(const std::string& s) {
  const auto colon = s.find(':');
  try {
    std::size_t used = 0;
    SmoothSpec out;
    out.size = std::stoi(s.substr(0, colon), &used);
    if (used != (colon == std::string::npos ? s.size() : colon)) throw InvalidArgument("");
    if (colon != std::string::npos) {
      const std::string rest = s.substr(colon + 1);
      out.order = std::stoi(rest, &used);
      if (used != rest.size()) throw InvalidArgument("");
    }
    if (out.order < 1 || out.size < out.order) throw InvalidArgument("");
    return out;
  } catch (const std::exception&) {
    throw InvalidArgument("basis spec '" + s + "' is not of the form J:order with J >= order >= 1");
  }
}

/// Steps applied to raw curves before testing, in this order: log-ratio on
/// grid values, row selection (drop, then keep, both by original 1-based row
/// number), B-spline smoothing, change to the Fourier working basis.
struct Preprocess {
  bool log_ratio = false;
  std::vector<int> drop;
  std::optional<IndexRange> keep;
  SmoothSpec smooth{};
};

/// X(t) -> log(X(t) / X(0)); every value must be positive.
inline Eigen::MatrixXd log_ratio_transform(const Eigen::MatrixXd& values) {
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index k = 0; k < values.cols(); ++k) {
      if (!(values(i, k) > 0.0))
        throw DataError("log-ratio needs positive values: row " + std::to_string(i + 1) + ", column " +
                        std::to_string(k + 1) + " has " + format_double(values(i, k)));
    }
    const double x0 = values(i, 0);
    for (Eigen::Index k = 0; k < values.cols(); ++k) out(i, k) = std::log(values(i, k) / x0);
  }
  return out;
}

/// Original 1-based row numbers surviving the drop list and keep range.
inline std::vector<int> selected_rows(int rows, const Preprocess& p) {
  for (int r : p.drop)
    if (r < 1 || r > rows)
      throw InvalidArgument("drop index " + std::to_string(r) + " outside 1.." + std::to_string(rows));
  if (p.keep && p.keep->last > rows)
    throw InvalidArgument("keep range ends at " + std::to_string(p.keep->last) + " but there are only " +
                          std::to_string(rows) + " curves");
  std::vector<int> out;
  for (int r = 1; r <= rows; ++r) {
    if (std::find(p.drop.begin(), p.drop.end(), r) != p.drop.end()) continue;
    if (p.keep && (r < p.keep->first || r > p.keep->last)) continue;
    out.push_back(r);
  }
  return out;
}

/// Smoothed sample in the B-spline basis, ready for `run_test`.
inline FunctionalSample preprocess(const CurveTable& table, const Preprocess& p) {
  const Eigen::MatrixXd values = p.log_ratio ? log_ratio_transform(table.values) : table.values;
  const std::vector<int> rows = selected_rows(static_cast<int>(values.rows()), p);
  if (rows.size() < 2) throw InvalidArgument("fewer than 2 curves remain after row selection");
  Eigen::MatrixXd picked(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) picked.row(static_cast<Eigen::Index>(i)) = values.row(rows[i] - 1);
  const CurveFitter fitter(table.grid, bspline_basis(p.smooth.size, p.smooth.order));
  return fitter.fit_rows(picked);
}

/// ISO-8601 UTC time, taken from SOURCE_DATE_EPOCH when that is set.
inline std::string manifest_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) t = static_cast<std::time_t>(std::atoll(env));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::optional<std::string> input;
  std::optional<SimSpec> sim;
  std::optional<json> grid;
  std::optional<Preprocess> preprocess;
  bool rescaled = false;
  std::optional<TestConfig> test;
  std::uint64_t seed = 0;
  std::string version = FCUSUM_VERSION;
  std::string timestamp = manifest_timestamp();
};

inline json to_json(const RunManifest& m) {
  json j{{"tool", "fcusum"}, {"version", m.version}, {"timestamp", m.timestamp}, {"command", m.command}};
  if (m.input) j["input"] = *m.input;
  if (m.sim) j["sim"] = to_json(*m.sim);
  if (m.grid) j["grid"] = *m.grid;
  if (m.preprocess) {
    const Preprocess& p = *m.preprocess;
    j["preprocess"] = json{{"rescale_grid", m.rescaled},
                           {"log_ratio", p.log_ratio},
                           {"drop_indices", p.drop},
                           {"keep", p.keep ? json{p.keep->first, p.keep->last} : json(nullptr)},
                           {"basis_smooth", json{{"size", p.smooth.size}, {"order", p.smooth.order}}}};
  }
  if (m.test) j["test"] = to_json(*m.test);
  j["seed"] = m.seed;
  return j;
}

}  // namespace fcusum
