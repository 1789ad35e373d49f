#pragma once

// Monte Carlo driver for empirical size and power tables.

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "fcusum/cusum.hpp"
#include "fcusum/io.hpp"
#include "fcusum/lrcov.hpp"
#include "fcusum/random.hpp"
#include "fcusum/simulate.hpp"

namespace fcusum {

struct ExperimentGrid {
  std::vector<int> n{100};
  std::vector<double> psi{0.2};
  std::vector<KernelKind> kernel{KernelKind::Gaussian};
  std::vector<double> h{2.0};
  std::vector<int> d{2};
  std::vector<bool> alternative{false};
  int reps = 1000;
  double alpha = 0.1;
  std::uint64_t seed = 1;
  LagKernelKind lag_kernel = LagKernelKind::Plain;
  CriticalMethod critical = CriticalMethod::Vostrikova;
  ChangeSpec change{};  ///< shift used by alternative cells
  int burn_in = 100;
  int grid_points = 96;
  int basis_size = 25;
  int basis_order = 4;
  int fourier_size = 25;

  void validate() const {
    if (n.empty() || psi.empty() || kernel.empty() || h.empty() || d.empty() || alternative.empty())
      throw InvalidArgument("ExperimentGrid: every axis needs at least one value");
    if (reps < 1) throw InvalidArgument("ExperimentGrid: reps must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("ExperimentGrid: alpha must lie in (0,1)");
    for (int v : n)
      if (v < 2) throw InvalidArgument("ExperimentGrid: n must be >= 2");
    for (double v : psi)
      if (!(v >= 0.0 && v < 1.0)) throw InvalidArgument("ExperimentGrid: psi must lie in [0,1)");
    for (double v : h)
      if (!(v >= 0.0)) throw InvalidArgument("ExperimentGrid: h must be >= 0");
    for (int v : d)
      if (v < 1 || v > fourier_size) throw InvalidArgument("ExperimentGrid: d must lie in 1..fourier_size");
    for (KernelKind k : kernel)
      if (k == KernelKind::Custom) throw InvalidArgument("ExperimentGrid: custom kernels are not supported");
    if (!(change.theta > 0.0 && change.theta < 1.0)) throw InvalidArgument("ExperimentGrid: theta must lie in (0,1)");
  }
};

struct CellCoords {
  int n = 0;
  KernelKind kernel = KernelKind::Gaussian;
  double psi = 0.0;
  double h = 0.0;
  int d = 1;
  bool alternative = false;
};

struct CellResult {
  CellCoords coords;
  int reps = 0;
  int rejections = 0;
  double reject_rate = 0.0;
  double se = 0.0;                   ///< sqrt(p(1-p)/R)
  std::optional<double> khat_mean;   ///< of k_std / n, alternative cells only
  std::optional<double> khat_median;
  double seconds = 0.0;
  std::optional<std::string> failure;  ///< first failing replication, with its seed
};

struct GridResult {
  std::vector<CellResult> cells;
  std::uint64_t replications = 0;  ///< audit counter: tests actually evaluated
};

struct RunOptions {
  unsigned workers = 0;  ///< 0 = hardware concurrency
};

/// Cells in table order: alternative, kernel, n, psi, h, d.
inline std::vector<CellCoords> grid_cells(const ExperimentGrid& g) {
  std::vector<CellCoords> out;
  for (bool alt : g.alternative)
    for (KernelKind k : g.kernel)
      for (int n : g.n)
        for (double psi : g.psi)
          for (double h : g.h)
            for (int d : g.d) out.push_back(CellCoords{n, k, psi, h, d, alt});
  return out;
}

/// Seed of replication `rep` for the simulation coordinates of `c`. Cells
/// that differ only in (h, d) share their samples.
inline std::uint64_t replication_seed(std::uint64_t master, const CellCoords& c, int rep) {
  return derive_seed(master, {static_cast<std::uint64_t>(c.n), static_cast<std::uint64_t>(c.kernel),
                              std::bit_cast<std::uint64_t>(c.psi), c.alternative ? 1ULL : 0ULL,
                              static_cast<std::uint64_t>(rep)});
}

namespace detail {

struct SimGroup {
  CellCoords sim;                    ///< h and d unused
  std::vector<std::size_t> cells;    ///< indices into the cell list
  std::vector<double> bandwidths;    ///< distinct h values, sorted
};

inline double median_of(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)) + hi);
}

}  // namespace detail

inline GridResult run_grid(const ExperimentGrid& grid, RunOptions options = {}) {
  grid.validate();
  const std::vector<CellCoords> cells = grid_cells(grid);
  const int reps = grid.reps;

  // Group cells by simulation coordinates.
  std::vector<detail::SimGroup> groups;
  {
    std::map<std::tuple<int, int, double, bool>, std::size_t> index;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto key = std::make_tuple(cells[c].n, static_cast<int>(cells[c].kernel), cells[c].psi, cells[c].alternative);
      auto [it, fresh] = index.emplace(key, groups.size());
      if (fresh) groups.push_back(detail::SimGroup{cells[c], {}, {}});
      groups[it->second].cells.push_back(c);
    }
    for (auto& g : groups) {
      std::set<double> hs;
      for (std::size_t c : g.cells) hs.insert(cells[c].h);
      g.bandwidths.assign(hs.begin(), hs.end());
    }
  }

  // Per-group shared state, built lazily by whichever worker gets there first.
  struct GroupState {
    std::once_flag once;
    std::optional<Far1Simulator> sim;
    std::optional<CurveFitter> to_fourier;
    std::map<int, double> critical;  ///< by d
    std::string setup_error;
  };
  std::vector<GroupState> state(groups.size());

  // Outcomes indexed by [cell][rep]: reject flag, k_std, or failure.
  std::vector<std::vector<signed char>> reject(cells.size(), std::vector<signed char>(reps, -1));
  std::vector<std::vector<int>> khat(cells.size(), std::vector<int>(reps, 0));
  std::vector<std::vector<std::string>> errors(cells.size(), std::vector<std::string>(reps));
  std::vector<double> group_seconds(groups.size(), 0.0);
  std::mutex time_mutex;
  std::atomic<std::uint64_t> audit{0};

  const std::size_t tasks = groups.size() * static_cast<std::size_t>(reps);
  std::atomic<std::size_t> next{0};

  auto setup = [&](std::size_t gi) {
    GroupState& st = state[gi];
    const detail::SimGroup& g = groups[gi];
    try {
      SimSpec spec;
      spec.n = g.sim.n;
      spec.kernel = g.sim.kernel;
      spec.psi = g.sim.psi;
      spec.burn_in = grid.burn_in;
      spec.grid_points = grid.grid_points;
      spec.basis_size = grid.basis_size;
      spec.basis_order = grid.basis_order;
      if (g.sim.alternative) spec.change = grid.change;
      st.sim.emplace(spec);
      st.to_fourier.emplace(Grid::equidistant(static_cast<std::size_t>(grid.grid_points)),
                            fourier_basis(grid.fourier_size));
      for (std::size_t c : g.cells) {
        TestConfig cfg;
        cfg.d = cells[c].d;
        cfg.alpha = grid.alpha;
        cfg.critical = grid.critical;
        if (!st.critical.count(cfg.d)) st.critical[cfg.d] = critical_value(cfg, g.sim.n);
      }
    } catch (const std::exception& e) {
      st.setup_error = e.what();
    }
  };

  auto worker = [&] {
    for (std::size_t task = next++; task < tasks; task = next++) {
      const std::size_t gi = task / static_cast<std::size_t>(reps);
      const int rep = static_cast<int>(task % static_cast<std::size_t>(reps));
      const detail::SimGroup& g = groups[gi];
      GroupState& st = state[gi];
      std::call_once(st.once, setup, gi);
      const auto start = std::chrono::steady_clock::now();
      const std::uint64_t seed = replication_seed(grid.seed, g.sim, rep);
      auto fail_cells = [&](const std::vector<std::size_t>& which, const std::string& what) {
        for (std::size_t c : which) errors[c][rep] = "replication " + std::to_string(rep) + " (seed " +
                                                      std::to_string(seed) + "): " + what;
      };
      if (!st.setup_error.empty()) {
        fail_cells(g.cells, st.setup_error);
        continue;
      }
      std::optional<FunctionalSample> sample;
      try {
        sample.emplace(change_basis(st.sim->generate(seed), *st.to_fourier));
      } catch (const std::exception& e) {
        fail_cells(g.cells, e.what());
        continue;
      }
      for (double h : g.bandwidths) {
        std::vector<std::size_t> with_h;
        for (std::size_t c : g.cells)
          if (cells[c].h == h) with_h.push_back(c);
        std::optional<LrCovEstimate> est;
        try {
          est.emplace(lrcov_estimate(*sample, LagWindowKernel{grid.lag_kernel}, h));
        } catch (const std::exception& e) {
          fail_cells(with_h, e.what());
          continue;
        }
        for (std::size_t c : with_h) {
          try {
            TestConfig cfg;
            cfg.d = cells[c].d;
            cfg.h = h;
            cfg.lag_kernel = LagWindowKernel{grid.lag_kernel};
            cfg.alpha = grid.alpha;
            cfg.critical = grid.critical;
            cfg.fourier_size = grid.fourier_size;
            const TestResult r = run_test_with(*sample, *est, cfg, st.critical.at(cfg.d));
            reject[c][rep] = r.reject ? 1 : 0;
            khat[c][rep] = r.k_hat.standardized;
            ++audit;
          } catch (const std::exception& e) {
            fail_cells({c}, e.what());
          }
        }
      }
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::lock_guard lock(time_mutex);
      group_seconds[gi] += dt;
    }
  };

  unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(tasks, 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Deterministic reduction by index.
  GridResult out;
  out.replications = audit.load();
  out.cells.resize(cells.size());
  std::vector<std::size_t> group_of(cells.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (std::size_t c : groups[gi].cells) group_of[c] = gi;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellResult& r = out.cells[c];
    r.coords = cells[c];
    r.reps = reps;
    r.seconds = group_seconds[group_of[c]] / static_cast<double>(groups[group_of[c]].cells.size());
    for (int rep = 0; rep < reps; ++rep) {
      if (!errors[c][rep].empty()) {
        r.failure = errors[c][rep];
        break;
      }
    }
    if (r.failure) {
      r.reject_rate = std::numeric_limits<double>::quiet_NaN();
      r.se = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    for (int rep = 0; rep < reps; ++rep) r.rejections += reject[c][rep];
    r.reject_rate = static_cast<double>(r.rejections) / reps;
    r.se = std::sqrt(r.reject_rate * (1.0 - r.reject_rate) / reps);
    if (cells[c].alternative) {
      std::vector<double> frac(static_cast<std::size_t>(reps));
      double sum = 0.0;
      for (int rep = 0; rep < reps; ++rep) {
        frac[static_cast<std::size_t>(rep)] = static_cast<double>(khat[c][rep]) / cells[c].n;
        sum += frac[static_cast<std::size_t>(rep)];
      }
      r.khat_mean = sum / reps;
      r.khat_median = detail::median_of(std::move(frac));
    }
  }
  return out;
}

/// One grid with a single cell.
inline CellResult run_cell(const CellCoords& coords, int reps, std::uint64_t seed, ExperimentGrid settings = {},
                           RunOptions options = {}) {
  settings.n = {coords.n};
  settings.kernel = {coords.kernel};
  settings.psi = {coords.psi};
  settings.h = {coords.h};
  settings.d = {coords.d};
  settings.alternative = {coords.alternative};
  settings.reps = reps;
  settings.seed = seed;
  return run_grid(settings, options).cells.front();
}

// ---- configuration and output -------------------------------------------

inline ExperimentGrid read_experiment_grid(KeyValueConfig& cfg) {
  ExperimentGrid g;
  g.n = cfg.get_int_list("n", g.n);
  g.psi = cfg.get_double_list("psi", g.psi);
  if (cfg.has("kernel")) {
    g.kernel.clear();
    for (const auto& s : cfg.get_list("kernel", {}))
      g.kernel.push_back(config_value(cfg, "kernel", [&] { return parse_kernel_kind(s); }));
  }
  g.h = cfg.get_double_list("h", g.h);
  g.d = cfg.get_int_list("d", g.d);
  if (cfg.has("alternative")) {
    g.alternative.clear();
    for (const auto& s : cfg.get_list("alternative", {})) {
      if (s == "null" || s == "0" || s == "false") {
        g.alternative.push_back(false);
      } else if (s == "alt" || s == "1" || s == "true") {
        g.alternative.push_back(true);
      } else {
        cfg.fail("alternative", "'" + s + "' is not one of null, alt");
      }
    }
  }
  g.reps = static_cast<int>(cfg.get_int("reps", g.reps));
  g.alpha = cfg.get_double("alpha", g.alpha);
  g.seed = cfg.get_uint64("seed", g.seed);
  g.lag_kernel = config_value(cfg, "lag_kernel", [&] { return parse_lag_kernel(cfg.get_string("lag_kernel", "plain")); });
  g.critical =
      config_value(cfg, "critical", [&] { return parse_critical_method(cfg.get_string("critical", "vostrikova")); });
  g.change.theta = cfg.get_double("theta", g.change.theta);
  g.change.shape = config_value(cfg, "shape", [&] { return parse_change_shape(cfg.get_string("shape", "sin")); });
  g.change.amplitude = cfg.get_double("amplitude", g.change.amplitude);
  g.burn_in = static_cast<int>(cfg.get_int("burn_in", g.burn_in));
  g.grid_points = static_cast<int>(cfg.get_int("grid_points", g.grid_points));
  g.basis_size = static_cast<int>(cfg.get_int("basis_size", g.basis_size));
  g.basis_order = static_cast<int>(cfg.get_int("basis_order", g.basis_order));
  g.fourier_size = static_cast<int>(cfg.get_int("fourier_size", g.fourier_size));
  cfg.finish();
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), 0);
  }
  return g;
}

inline ExperimentGrid parse_experiment_grid(std::istream& in) {
  KeyValueConfig cfg = KeyValueConfig::parse(in);
  return read_experiment_grid(cfg);
}

inline json to_json(const ExperimentGrid& g) {
  json kernels = json::array();
  for (KernelKind k : g.kernel) kernels.push_back(to_string(k));
  json alts = json::array();
  for (bool a : g.alternative) alts.push_back(a ? "alt" : "null");
  return json{{"n", g.n},
              {"psi", g.psi},
              {"kernel", kernels},
              {"h", g.h},
              {"d", g.d},
              {"alternative", alts},
              {"reps", g.reps},
              {"alpha", g.alpha},
              {"seed", g.seed},
              {"lag_kernel", to_string(g.lag_kernel)},
              {"critical", to_string(g.critical)},
              {"change", json{{"shape", to_string(g.change.shape)},
                              {"theta", g.change.theta},
                              {"amplitude", g.change.amplitude}}},
              {"burn_in", g.burn_in},
              {"grid_points", g.grid_points},
              {"basis_size", g.basis_size},
              {"basis_order", g.basis_order},
              {"fourier_size", g.fourier_size}};
}

struct CsvOptions {
  bool timing = true;  ///< false writes 0 in the seconds column (byte-stable output)
};

/// Long format: one row per cell.
inline void write_cells_csv(std::ostream& out, const GridResult& result, CsvOptions opt = {}) {
  char buf[64];
  out << "n,kernel,psi,h,d,alternative,R,reject_rate,se,khat_mean,khat_median,seconds,failure\n";
  for (const CellResult& r : result.cells) {
    out << r.coords.n << ',' << to_string(r.coords.kernel) << ',' << format_double(r.coords.psi) << ','
        << format_double(r.coords.h) << ',' << r.coords.d << ',' << (r.coords.alternative ? "alt" : "null") << ','
        << r.reps << ',';
    if (r.failure) {
      out << ",,,,";
    } else {
      out << format_double(r.reject_rate) << ',' << format_double(r.se) << ','
          << (r.khat_mean ? format_double(*r.khat_mean) : "") << ','
          << (r.khat_median ? format_double(*r.khat_median) : "") << ',';
    }
    std::snprintf(buf, sizeof buf, "%.3f", opt.timing ? r.seconds : 0.0);
    out << buf << ',';
    if (r.failure) {
      std::string f = *r.failure;
      std::replace(f.begin(), f.end(), '"', '\'');
      out << '"' << f << '"';
    }
    out << '\n';
  }
}

/// Table layout: rows (table, kernel, n, psi), columns h x d, entries in percent.
inline void write_wide_csv(std::ostream& out, const ExperimentGrid& g, const GridResult& result) {
  std::map<std::tuple<bool, int, int, double, double, int>, const CellResult*> at;
  for (const CellResult& r : result.cells)
    at[{r.coords.alternative, static_cast<int>(r.coords.kernel), r.coords.n, r.coords.psi, r.coords.h, r.coords.d}] =
        &r;
  out << "table,kernel,n,psi";
  for (double h : g.h)
    for (int d : g.d) out << ",h" << format_double(h) << "_d" << d;
  out << '\n';
  char buf[32];
  for (bool alt : g.alternative)
    for (KernelKind k : g.kernel)
      for (int n : g.n)
        for (double psi : g.psi) {
          out << (alt ? "power" : "size") << ',' << to_string(k) << ',' << n << ',' << format_double(psi);
          for (double h : g.h)
            for (int d : g.d) {
              const CellResult* r = at.at({alt, static_cast<int>(k), n, psi, h, d});
              if (r->failure) {
                out << ",NA";
              } else {
                std::snprintf(buf, sizeof buf, "%.1f", 100.0 * r->reject_rate);
                out << ',' << buf;
              }
            }
          out << '\n';
        }
}

}  // namespace fcusum
