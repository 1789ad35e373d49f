// fcusum: change-in-mean test for functional time series, FAR(1) simulator
// and Monte Carlo size/power tables.
//
// Exit codes: 0 success (whatever the test decision), 2 input error,
// 3 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fcusum/cusum.hpp"
#include "fcusum/harness.hpp"
#include "fcusum/io.hpp"
#include "fcusum/lrcov.hpp"
#include "fcusum/pipeline.hpp"
#include "fcusum/simulate.hpp"

namespace {

using namespace fcusum;

constexpr int kInputError = 2;
constexpr int kNumericalError = 3;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  return in;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw InvalidArgument("write to '" + path + "' failed");
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct TestArgs {
  std::string input;
  int d = 1;
  double h = 0.0;
  std::string lag_kernel = "plain";
  double alpha = 0.1;
  std::string critical = "vostrikova";
  std::string smooth = "25:4";
  int fourier = 25;
  bool log_ratio = false;
  std::string keep;
  std::vector<int> drop;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_test(const TestArgs& a) {
  Preprocess pre;
  pre.log_ratio = a.log_ratio;
  pre.drop = a.drop;
  if (!a.keep.empty()) pre.keep = parse_index_range(a.keep);
  pre.smooth = parse_smooth_spec(a.smooth);

  TestConfig cfg;
  cfg.d = a.d;
  cfg.h = a.h;
  cfg.lag_kernel = LagWindowKernel{parse_lag_kernel(a.lag_kernel)};
  cfg.alpha = a.alpha;
  cfg.critical = parse_critical_method(a.critical);
  cfg.fourier_size = a.fourier;
  cfg.validate();

  std::ifstream in = open_input(a.input);
  const CurveTable table = read_curve_csv(in);
  cfg.conversion_points = static_cast<int>(table.grid.size());
  const FunctionalSample smoothed = preprocess(table, pre);
  const FunctionalSample working = to_working_basis(smoothed, cfg);
  if (cfg.d > working.basis()->size())
    throw InvalidArgument("--d " + std::to_string(cfg.d) + " exceeds the Fourier basis size " +
                          std::to_string(working.basis()->size()));
  const LrCovEstimate est = lrcov_estimate(working, cfg.lag_kernel, cfg.h);
  const TestResult r = run_test_with(working, est, cfg);

  RunManifest m;
  m.command = "test";
  m.input = a.input;
  m.preprocess = pre;
  m.rescaled = table.rescaled;
  m.test = cfg;
  m.seed = a.seed;
  json report{{"schema", kReportSchema}, {"manifest", to_json(m)}, {"result", to_json(r)}, {"lrcov", to_json(est)}};

  std::ostringstream summary;
  summary << "n = " << r.n << ", d = " << r.d << ", h = " << format_double(r.h) << " (" << to_string(r.lag_kernel)
          << ")\n";
  summary << "T = " << (r.degenerate ? std::string("inf (zero eigenvalue)") : fmt("%.4f", r.statistic)) << '\n';
  if (r.normalized) summary << "normalized = " << fmt("%.4f", *r.normalized) << '\n';
  summary << "p (vostrikova) = " << fmt("%.4g", r.p_vostrikova) << '\n';
  if (r.p_gumbel) summary << "p (gumbel) = " << fmt("%.4g", *r.p_gumbel) << '\n';
  summary << "critical (" << to_string(r.critical) << ", alpha = " << format_double(r.alpha)
          << ") = " << fmt("%.4f", r.critical_value) << '\n';
  summary << "decision: " << (r.reject ? "reject" : "do not reject") << " H0\n";
  summary << "k_hat: standardized " << r.k_hat.standardized << ", unstandardized " << r.k_hat.unstandardized
          << ", fully functional " << r.k_hat.fully_functional << '\n';

  if (a.out.empty()) {
    std::cerr << summary.str();
    std::cout << report.dump(2) << '\n';
  } else {
    write_file(a.out, report.dump(2) + "\n");
    std::cout << summary.str();
  }
  return 0;
}

struct SimulateArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
  std::ifstream in = open_input(a.spec);
  SimSpec spec = parse_sim_spec(in);
  if (a.seed) spec.seed = *a.seed;
  const Far1Simulator sim(spec);
  const FunctionalSample sample = sim.generate();

  std::ostringstream csv;
  write_curve_csv(csv, sample, sim.fitter().grid());
  write_file(a.out, csv.str());

  RunManifest m;
  m.command = "simulate";
  m.sim = spec;
  m.seed = spec.seed;
  json sidecar{{"schema", kReportSchema}, {"manifest", to_json(m)}, {"output", a.out}};
  write_file(a.out + ".json", sidecar.dump(2) + "\n");
  std::cout << "wrote " << sample.size() << " curves on " << sim.fitter().grid().size() << " grid points to "
            << a.out << '\n';
  return 0;
}

struct TablesArgs {
  std::string grid;
  std::string out;
  std::string wide;
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;
  bool no_timing = false;
};

int cmd_tables(const TablesArgs& a) {
  std::ifstream in = open_input(a.grid);
  ExperimentGrid grid = parse_experiment_grid(in);
  if (a.seed) grid.seed = *a.seed;
  const GridResult result = run_grid(grid, RunOptions{a.workers});

  std::ostringstream csv;
  write_cells_csv(csv, result, CsvOptions{!a.no_timing});
  write_file(a.out, csv.str());
  if (!a.wide.empty()) {
    std::ostringstream wide;
    write_wide_csv(wide, grid, result);
    write_file(a.wide, wide.str());
  }

  int failed = 0;
  for (const CellResult& c : result.cells) failed += c.failure ? 1 : 0;
  RunManifest m;
  m.command = "tables";
  m.grid = to_json(grid);
  m.seed = grid.seed;
  json sidecar{{"schema", kReportSchema},
               {"manifest", to_json(m)},
               {"output", a.out},
               {"cells", result.cells.size()},
               {"failed_cells", failed},
               {"replications", result.replications}};
  write_file(a.out + ".json", sidecar.dump(2) + "\n");
  std::cout << "wrote " << result.cells.size() << " cells (" << result.replications << " replications) to " << a.out
            << '\n';
  if (failed) std::cerr << failed << " cell(s) failed; see the failure column\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Change-in-mean test for functional time series"};
  app.set_version_flag("--version", std::string(FCUSUM_VERSION));
  app.require_subcommand(1);
  app.set_help_flag("--help", "Print this help message and exit");  // -h is taken by --h

  TestArgs ta;
  auto* test = app.add_subcommand("test", "Run the weighted CUSUM test on curves from a CSV file");
  test->set_help_flag("--help", "Print this help message and exit");
  test->add_option("input", ta.input, "CSV with header t=<v1>,t=<v2>,... and one curve per row")->required();
  test->add_option("--d", ta.d, "Number of long-run principal components")->capture_default_str();
  test->add_option("--h", ta.h, "Lag-window bandwidth (0 uses the lag-0 covariance)")->capture_default_str();
  test->add_option("--lag-kernel", ta.lag_kernel, "plain, bartlett, parzen or flattop")->capture_default_str();
  test->add_option("--alpha", ta.alpha, "Nominal level")->capture_default_str();
  test->add_option("--critical", ta.critical, "vostrikova or gumbel")->capture_default_str();
  test->add_option("--basis-smooth", ta.smooth, "B-spline smoothing basis J:order")->capture_default_str();
  test->add_option("--fourier", ta.fourier, "Size of the Fourier working basis")->capture_default_str();
  test->add_flag("--log-ratio", ta.log_ratio, "Transform curves to log(X(t)/X(0)) first");
  test->add_option("--keep", ta.keep, "Keep rows i..j (1-based, original numbering)");
  test->add_option("--drop-indices", ta.drop, "Rows to drop (1-based, original numbering)")->delimiter(',');
  test->add_option("--seed", ta.seed, "Recorded in the manifest");
  test->add_option("--out", ta.out, "Write the JSON report here (default: stdout)");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Generate a FAR(1) sample from a key = value spec");
  simulate->add_option("spec", sa.spec, "SimSpec config file")->required();
  simulate->add_option("--out", sa.out, "Output CSV; the manifest goes to <out>.json")->required();
  simulate->add_option("--seed", sa.seed, "Override the seed in the config");

  TablesArgs tb;
  auto* tables = app.add_subcommand("tables", "Monte Carlo size/power tables from an experiment grid config");
  tables->add_option("grid", tb.grid, "ExperimentGrid config file")->required();
  tables->add_option("--out", tb.out, "Long-format CSV; the manifest goes to <out>.json")->required();
  tables->add_option("--wide", tb.wide, "Also write the table layout (rows n x psi, columns h x d)");
  tables->add_option("--seed", tb.seed, "Override the master seed");
  tables->add_option("--workers", tb.workers, "Worker threads (0 = all cores)");
  tables->add_flag("--no-timing", tb.no_timing, "Write 0 in the seconds column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  try {
    if (*test) return cmd_test(ta);
    if (*simulate) return cmd_simulate(sa);
    if (*tables) return cmd_tables(tb);
  } catch (const NumericalFailure& e) {
    std::cerr << "fcusum: numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const Error& e) {
    std::cerr << "fcusum: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "fcusum: " << e.what() << '\n';
    return kInputError;
  }
  return 0;
}
