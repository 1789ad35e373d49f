#pragma once

// Text formats: curve CSV, key = value configs, JSON serialization.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fcusum/basis.hpp"
#include "fcusum/cusum.hpp"
#include "fcusum/errors.hpp"
#include "fcusum/lrcov.hpp"
#include "fcusum/simulate.hpp"

namespace fcusum {

using json = nlohmann::ordered_json;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// Curves sampled on a common grid, as read from CSV.
struct CurveTable {
  std::vector<double> abscissae;  ///< header values as written
  Grid grid;                      ///< abscissae mapped to [0,1]
  bool rescaled = false;          ///< whether the header needed min-max rescaling
  Eigen::MatrixXd values;         ///< one row per curve
};

/// Reads the header "t=<v1>,t=<v2>,..." and one row of values per curve.
inline CurveTable read_curve_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> abscissae;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) throw ParseError("empty input, expected a header row", 0);
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  for (auto cell : detail::split(line, ',')) {
    double t = 0.0;
    if (cell.substr(0, 2) != "t=" || !detail::parse_double(detail::trim(cell.substr(2)), t))
      throw ParseError("header cell '" + std::string(cell) + "' is not of the form t=<number>", lineno);
    abscissae.push_back(t);
  }
  if (abscissae.size() < 2) throw ParseError("header needs at least 2 grid points", lineno);
  for (std::size_t k = 1; k < abscissae.size(); ++k) {
    if (!(abscissae[k] > abscissae[k - 1]))
      throw ParseError("header abscissae must be strictly increasing (column " + std::to_string(k + 1) + ")", lineno);
  }

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    if (cells.size() != abscissae.size())
      throw ParseError("expected " + std::to_string(abscissae.size()) + " values, found " +
                           std::to_string(cells.size()),
                       lineno);
    std::vector<double> row(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (!detail::parse_double(cells[k], row[k]))
        throw ParseError("column " + std::to_string(k + 1) + ": '" + std::string(cells[k]) + "' is not a finite number",
                         lineno);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no data rows after the header", 0);

  const bool unit = abscissae.front() == 0.0 && abscissae.back() == 1.0;
  CurveTable table{abscissae, unit ? Grid(abscissae) : Grid::rescaled(abscissae), !unit,
                   Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(abscissae.size()))};
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < abscissae.size(); ++k)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return table;
}

inline void write_curve_csv(std::ostream& out, const Grid& grid, const Eigen::MatrixXd& values) {
  for (std::size_t k = 0; k < grid.size(); ++k) out << (k ? "," : "") << "t=" << format_double(grid[k]);
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index k = 0; k < values.cols(); ++k) out << (k ? "," : "") << format_double(values(i, k));
    out << '\n';
  }
}

inline void write_curve_csv(std::ostream& out, const FunctionalSample& sample, const Grid& grid) {
  write_curve_csv(out, grid, sample.values(grid));
}

/// Plain-text "key = value" configuration. '#' starts a comment; keys must be
/// unique. Every key has to be consumed, leftovers are reported by `finish`.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in) {
    KeyValueConfig cfg;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      std::string_view line = raw;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", lineno);
      const std::string key(detail::trim(line.substr(0, eq)));
      const std::string value(detail::trim(line.substr(eq + 1)));
      if (key.empty()) throw ParseError("missing key before '='", lineno);
      if (cfg.entries_.count(key)) throw ParseError("duplicate key '" + key + "'", lineno);
      cfg.entries_[key] = Entry{value, lineno, false};
    }
    return cfg;
  }

  static KeyValueConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    return it->second.value;
  }

  double get_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    return to_double(key, get_string(key, ""));
  }

  long long get_int(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    return to_int(key, get_string(key, ""));
  }

  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail(key, "'" + v + "' is not an unsigned integer");
    return out;
  }

  std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback) {
    if (!has(key)) return fallback;
    const std::string raw = get_string(key, "");
    std::vector<std::string> out;
    for (auto item : detail::split(raw, ',')) {
      if (item.empty()) fail(key, "empty list item");
      out.emplace_back(item);
    }
    return out;
  }

  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& s : get_list(key, {})) out.push_back(to_double(key, s));
    return out;
  }

  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) {
    if (!has(key)) return fallback;
    std::vector<int> out;
    for (const auto& s : get_list(key, {})) out.push_back(static_cast<int>(to_int(key, s)));
    return out;
  }

  /// Throws for any key that no reader asked for.
  void finish() const {
    for (const auto& [key, e] : entries_)
      if (!e.used) throw ParseError("unknown key '" + key + "'", e.line);
  }

  /// Wraps a domain error raised while interpreting `key`.
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    auto it = entries_.find(key);
    throw ParseError("key '" + key + "': " + what, it == entries_.end() ? 0 : it->second.line);
  }

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    bool used = false;
  };

  double to_double(const std::string& key, const std::string& v) const {
    double out = 0.0;
    if (!detail::parse_double(v, out)) fail(key, "'" + v + "' is not a finite number");
    return out;
  }

  long long to_int(const std::string& key, const std::string& v) const {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail(key, "'" + v + "' is not an integer");
    return out;
  }

  std::map<std::string, Entry> entries_;
};

/// Calls `f` and rethrows InvalidArgument as a ParseError naming `key`.
template <class F>
auto config_value(KeyValueConfig& cfg, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ParseError&) {
    throw;
  } catch (const InvalidArgument& e) {
    cfg.fail(key, e.what());
  }
}

// ---- SimSpec <-> key = value --------------------------------------------

inline SimSpec read_sim_spec(KeyValueConfig& cfg) {
  SimSpec s;
  s.n = static_cast<int>(cfg.get_int("n", s.n));
  s.kernel = config_value(cfg, "kernel", [&] { return parse_kernel_kind(cfg.get_string("kernel", "gaussian")); });
  s.psi = cfg.get_double("psi", s.psi);
  s.burn_in = static_cast<int>(cfg.get_int("burn_in", s.burn_in));
  s.seed = cfg.get_uint64("seed", s.seed);
  s.grid_points = static_cast<int>(cfg.get_int("grid_points", s.grid_points));
  s.basis_size = static_cast<int>(cfg.get_int("basis_size", s.basis_size));
  s.basis_order = static_cast<int>(cfg.get_int("basis_order", s.basis_order));
  const std::string change = cfg.get_string("change", "none");
  if (change != "none") {
    ChangeSpec c;
    c.shape = config_value(cfg, "change", [&] { return parse_change_shape(change); });
    c.theta = cfg.get_double("theta", c.theta);
    c.amplitude = cfg.get_double("amplitude", c.amplitude);
    s.change = c;
  } else if (cfg.has("theta") || cfg.has("amplitude")) {
    cfg.fail(cfg.has("theta") ? "theta" : "amplitude", "only valid together with 'change'");
  }
  if (s.n < 2) cfg.fail("n", "must be >= 2");
  if (!(s.psi >= 0.0 && s.psi < 1.0)) cfg.fail("psi", "must lie in [0,1)");
  if (s.burn_in < 0) cfg.fail("burn_in", "must be >= 0");
  if (s.grid_points < 2) cfg.fail("grid_points", "must be >= 2");
  if (s.basis_order < 1) cfg.fail("basis_order", "must be >= 1");
  if (s.basis_size < s.basis_order) cfg.fail("basis_size", "must be >= basis_order");
  if (s.grid_points < s.basis_size) cfg.fail("grid_points", "must be >= basis_size");
  if (s.change && !(s.change->theta > 0.0 && s.change->theta < 1.0)) cfg.fail("theta", "must lie in (0,1)");
  cfg.finish();
  return s;
}

inline SimSpec parse_sim_spec(std::istream& in) {
  KeyValueConfig cfg = KeyValueConfig::parse(in);
  return read_sim_spec(cfg);
}

inline std::string to_config(const SimSpec& s) {
  std::ostringstream o;
  o << "n = " << s.n << '\n'
    << "kernel = " << to_string(s.kernel) << '\n'
    << "psi = " << format_double(s.psi) << '\n'
    << "burn_in = " << s.burn_in << '\n'
    << "seed = " << s.seed << '\n'
    << "grid_points = " << s.grid_points << '\n'
    << "basis_size = " << s.basis_size << '\n'
    << "basis_order = " << s.basis_order << '\n';
  if (s.change) {
    o << "change = " << to_string(s.change->shape) << '\n'
      << "theta = " << format_double(s.change->theta) << '\n'
      << "amplitude = " << format_double(s.change->amplitude) << '\n';
  } else {
    o << "change = none\n";
  }
  return o.str();
}

// ---- JSON ---------------------------------------------------------------

namespace detail {
inline json to_json_vector(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
}  // namespace detail

inline json to_json(const Basis& b) {
  json j{{"kind", b.kind() == BasisKind::FourierOrthonormal ? "fourier" : "bspline"}, {"size", b.size()}};
  if (b.kind() == BasisKind::BSpline) j["order"] = b.order();
  return j;
}

inline json to_json(const SimSpec& s) {
  json j{{"n", s.n},           {"kernel", to_string(s.kernel)},   {"psi", s.psi},
         {"burn_in", s.burn_in}, {"seed", s.seed},                {"grid_points", s.grid_points},
         {"basis_size", s.basis_size}, {"basis_order", s.basis_order}};
  if (s.change) {
    j["change"] = json{{"shape", to_string(s.change->shape)},
                       {"theta", s.change->theta},
                       {"amplitude", s.change->amplitude}};
  } else {
    j["change"] = nullptr;
  }
  return j;
}

inline json to_json(const TestConfig& c) {
  return json{{"d", c.d},
              {"h", c.h},
              {"lag_kernel", to_string(c.lag_kernel.kind)},
              {"alpha", c.alpha},
              {"critical", to_string(c.critical)},
              {"fourier_size", c.fourier_size},
              {"conversion_points", c.conversion_points}};
}

/// Basis descriptor, row-major matrix, eigenvalues, eigenvector coefficients
/// (one array per eigenfunction), bandwidth and lag kernel.
inline json to_json(const LrCovEstimate& e) {
  json matrix = json::array();
  for (Eigen::Index i = 0; i < e.matrix.rows(); ++i) matrix.push_back(detail::to_json_vector(e.matrix.row(i)));
  json funs = json::array();
  for (Eigen::Index j = 0; j < e.eigen.vectors.cols(); ++j) funs.push_back(detail::to_json_vector(e.eigen.vectors.col(j)));
  return json{{"basis", to_json(*e.basis)},
              {"matrix", matrix},
              {"eigenvalues", detail::to_json_vector(e.eigen.values)},
              {"signed_eigenvalues", detail::to_json_vector(e.eigen.signed_values)},
              {"eigenfunctions", funs},
              {"h", e.bandwidth},
              {"max_lag", e.max_lag},
              {"kernel", to_string(e.kernel.kind)}};
}

inline json to_json(const TestResult& r) {
  return json{{"statistic", detail::finite_or_null(r.statistic)},
              {"degenerate", r.degenerate},
              {"normalized", r.normalized ? detail::finite_or_null(*r.normalized) : json(nullptr)},
              {"p_gumbel", r.p_gumbel ? json(*r.p_gumbel) : json(nullptr)},
              {"p_vostrikova", r.p_vostrikova},
              {"critical_value", r.critical_value},
              {"critical_method", to_string(r.critical)},
              {"alpha", r.alpha},
              {"reject", r.reject},
              {"k_hat",
               json{{"standardized", r.k_hat.standardized},
                    {"unstandardized", r.k_hat.unstandardized},
                    {"fully_functional", r.k_hat.fully_functional}}},
              {"d", r.d},
              {"h", r.h},
              {"n", r.n},
              {"lag_kernel", to_string(r.lag_kernel)},
              {"lambdas", detail::to_json_vector(r.lambdas)}};
}

inline std::string test_result_csv_header() {
  return "n,d,h,lag_kernel,statistic,normalized,p_gumbel,p_vostrikova,critical_value,critical_method,alpha,reject,"
         "k_std,k_unstd,k_full";
}

/// One CSV row matching `test_result_csv_header`; absent values are empty.
inline std::string to_csv_row(const TestResult& r) {
  std::ostringstream o;
  auto opt = [](const std::optional<double>& v) { return v && std::isfinite(*v) ? format_double(*v) : std::string(); };
  o << r.n << ',' << r.d << ',' << format_double(r.h) << ',' << to_string(r.lag_kernel) << ','
    << (std::isfinite(r.statistic) ? format_double(r.statistic) : "inf") << ',' << opt(r.normalized) << ','
    << opt(r.p_gumbel) << ',' << format_double(r.p_vostrikova) << ',' << format_double(r.critical_value) << ','
    << to_string(r.critical) << ',' << format_double(r.alpha) << ',' << (r.reject ? 1 : 0) << ','
    << r.k_hat.standardized << ',' << r.k_hat.unstandardized << ',' << r.k_hat.fully_functional;
  return o.str();
}

}  // namespace fcusum
