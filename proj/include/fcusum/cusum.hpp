#pragma once

// Darling-Erdos weighted CUSUM of long-run principal component scores:
// the statistic, its normalization, p-values, critical values and the
// change-point estimators.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "fcusum/basis.hpp"
#include "fcusum/errors.hpp"
#include "fcusum/lrcov.hpp"

namespace fcusum {

enum class CriticalMethod { Vostrikova, Gumbel };

inline std::string to_string(CriticalMethod m) { return m == CriticalMethod::Vostrikova ? "vostrikova" : "gumbel"; }

inline CriticalMethod parse_critical_method(const std::string& s) {
  if (s == "vostrikova") return CriticalMethod::Vostrikova;
  if (s == "gumbel") return CriticalMethod::Gumbel;
  throw InvalidArgument("unknown critical method '" + s + "' (expected vostrikova or gumbel)");
}

/// Weight (t(1-t))^{-1/2} at t = k/n.
inline double cusum_weight(int k, int n) {
  const double t = static_cast<double>(k) / n;
  return 1.0 / std::sqrt(t * (1.0 - t));
}

/// Partial sums eta(k, r) = n^{-1/2} sum_{i<=k} <X_i - mean, v_r>, k = 1..n-1
/// stored in row k-1, plus the eigenvalues used to standardize them.
struct ScoreMatrix {
  Eigen::MatrixXd eta;
  Eigen::VectorXd lambdas;

  int n() const noexcept { return static_cast<int>(eta.rows()) + 1; }
  int d() const noexcept { return static_cast<int>(eta.cols()); }
};

/// Per-observation scores of the centred sample onto the first d eigenfunctions.
inline Eigen::MatrixXd projected_scores(const FunctionalSample& sample, const LrCovEstimate& est, int d) {
  if (d < 1 || d > est.size()) throw InvalidArgument("scores: d must satisfy 1 <= d <= J");
  if (!same_basis(*sample.basis(), *est.basis))
    throw IncompatibleBasis("scores: sample in " + sample.basis()->describe() + ", eigenfunctions in " +
                            est.basis->describe());
  const Eigen::MatrixXd centered = centered_coefficients(sample);
  const auto v = est.eigen.vectors.leftCols(d);
  if (sample.basis()->orthonormal()) return centered * v;
  return centered * (sample.basis()->gram() * v);
}

/// Cumulative sums of the rows of `per_obs`, scaled by n^{-1/2}; rows 1..n-1.
inline Eigen::MatrixXd partial_sums(const Eigen::MatrixXd& per_obs) {
  const auto n = per_obs.rows();
  Eigen::MatrixXd out(n - 1, per_obs.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  Eigen::RowVectorXd running = Eigen::RowVectorXd::Zero(per_obs.cols());
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    running += per_obs.row(k);
    out.row(k) = running * scale;
  }
  return out;
}

inline ScoreMatrix scores(const FunctionalSample& sample, const LrCovEstimate& est, int d) {
  if (sample.size() < 2) throw InvalidArgument("scores: need at least 2 curves");
  return ScoreMatrix{partial_sums(projected_scores(sample, est, d)), est.eigen.values.head(d)};
}

struct StatisticValue {
  double value = 0.0;
  int argmax = 1;            ///< smallest maximizing k in 1..n-1
  bool degenerate = false;   ///< a used eigenvalue was zero; value is +infinity
};

namespace detail {
// Sum_r eta^2 / lambda_r at row k, zero-variance components with identically
// zero scores contributing nothing.
inline Eigen::VectorXd standardization(const ScoreMatrix& s, bool standardized, bool& degenerate) {
  Eigen::VectorXd inv = Eigen::VectorXd::Ones(s.d());
  degenerate = false;
  if (!standardized) return inv;
  for (int r = 0; r < s.d(); ++r) {
    if (s.lambdas[r] > 0.0) {
      inv[r] = 1.0 / s.lambdas[r];
    } else if (s.eta.col(r).cwiseAbs().maxCoeff() == 0.0) {
      inv[r] = 0.0;
    } else {
      degenerate = true;
    }
  }
  return inv;
}

template <class Objective>
StatisticValue weighted_max(int n, Objective&& squared_norm_at) {
  StatisticValue best;
  best.value = -1.0;
  for (int k = 1; k < n; ++k) {
    const double v = cusum_weight(k, n) * std::sqrt(squared_norm_at(k - 1));
    if (v > best.value) {
      best.value = v;
      best.argmax = k;
    }
  }
  return best;
}
}  // namespace detail

/// max_k w(k/n) (sum_r eta_{k,r}^2 / lambda_r)^{1/2}; without standardization
/// the division by lambda_r is omitted.
inline StatisticValue statistic(const ScoreMatrix& s, bool standardized = true) {
  if (s.n() < 2) throw InvalidArgument("statistic: n must be >= 2");
  bool degenerate = false;
  const Eigen::VectorXd inv = detail::standardization(s, standardized, degenerate);
  if (degenerate) {
    StatisticValue raw = statistic(s, false);
    return StatisticValue{std::numeric_limits<double>::infinity(), raw.argmax, true};
  }
  return detail::weighted_max(s.n(), [&](Eigen::Index row) {
    double q = 0.0;
    for (int r = 0; r < s.d(); ++r) q += s.eta(row, r) * s.eta(row, r) * inv[r];
    return q;
  });
}

/// max_k w(k/n) || n^{-1/2} sum_{i<=k} (X_i - mean) || over the full curves.
inline StatisticValue fully_functional_statistic(const FunctionalSample& sample) {
  if (sample.size() < 2) throw InvalidArgument("statistic: n must be >= 2");
  const Eigen::MatrixXd path = partial_sums(centered_coefficients(sample));
  if (sample.basis()->orthonormal())
    return detail::weighted_max(sample.size(), [&](Eigen::Index row) { return path.row(row).squaredNorm(); });
  const Eigen::MatrixXd& g = sample.basis()->gram();
  return detail::weighted_max(sample.size(), [&](Eigen::Index row) {
    return std::max(0.0, path.row(row).dot(path.row(row) * g));
  });
}

struct Normalizers {
  double a = 0.0;
  double b = 0.0;
};

/// Whether the Darling-Erdos normalization is defined at sample size n.
inline bool has_normalizers(int n) { return n >= 16; }

/// a(t) = (2 log t)^{1/2}, b_d(t) = 2 log t + (d/2) log log t - log Gamma(d/2).
inline Normalizers normalizers_at(double t, int d) {
  if (d < 1) throw InvalidArgument("normalizers: d must be >= 1");
  if (!(t > 1.0 && std::log(std::log(t)) >= 0.0))
    throw InvalidArgument("normalizers: need log log t >= 0 (t = log n, so n >= 16)");
  const double lt = std::log(t);
  return Normalizers{std::sqrt(2.0 * lt), 2.0 * lt + 0.5 * d * std::log(lt) - std::lgamma(0.5 * d)};
}

inline Normalizers normalizers(int n, int d) {
  if (n < 2) throw InvalidArgument("normalizers: n must be >= 2");
  return normalizers_at(std::log(static_cast<double>(n)), d);
}

/// 1 - exp(-2 exp(-(a T - b))) from the Gumbel-type limit.
inline double gumbel_pvalue(double statistic_value, int n, int d) {
  const Normalizers nz = normalizers(n, d);
  if (std::isinf(statistic_value) && statistic_value > 0) return 0.0;
  const double x = nz.a * statistic_value - nz.b;
  const double p = -std::expm1(-2.0 * std::exp(-x));
  return std::clamp(p, 0.0, 1.0);
}

inline double gumbel_critical(double alpha, int n, int d) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("gumbel_critical: alpha must lie in (0,1)");
  const Normalizers nz = normalizers(n, d);
  const double x = -std::log(-std::log1p(-alpha) / 2.0);
  return (x + nz.b) / nz.a;
}

/// Truncation (log n)^{3/2} / n of the interval [h_n, 1 - h_n].
inline double vostrikova_offset(int n) {
  if (n < 2) throw InvalidArgument("vostrikova: n must be >= 2");
  const double ln = std::log(static_cast<double>(n));
  return ln * std::sqrt(ln) / n;
}

/// Vostrikova's expansion of P(V_n >= x), remainder dropped, clamped to [0,1].
inline double vostrikova_tail(double x, int n, int d) {
  if (d < 1) throw InvalidArgument("vostrikova_tail: d must be >= 1");
  if (!(x > std::sqrt(static_cast<double>(d))))
    throw DomainError("vostrikova_tail: x must exceed sqrt(d) for the expansion to apply");
  const double h = vostrikova_offset(n);
  if (!(h < 0.5)) throw DomainError("vostrikova_tail: truncation (log n)^1.5/n must be < 1/2");
  if (std::isinf(x)) return 0.0;
  const double half_d = 0.5 * d;
  const double log_lead = d * std::log(x) - 0.5 * x * x - half_d * std::numbers::ln2 - std::lgamma(half_d);
  const double x2 = x * x;
  const double bracket = (1.0 - d / x2) * std::log((1.0 - h) * (1.0 - h) / (h * h)) + 4.0 / x2;
  return std::clamp(std::exp(log_lead) * bracket, 0.0, 1.0);
}

/// p-value from the tail expansion at the observed statistic; 1 outside its domain.
inline double vostrikova_pvalue(double statistic_value, int n, int d) {
  if (!(statistic_value > std::sqrt(static_cast<double>(d)))) return 1.0;
  return vostrikova_tail(statistic_value, n, d);
}

/// Root of vostrikova_tail(x) = alpha by bisection. The expansion rises just
/// above sqrt(d) before it decays, so the bracket starts at its maximum.
inline double vostrikova_critical(double alpha, int n, int d) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("vostrikova_critical: alpha must lie in (0,1)");
  const double lo = std::sqrt(static_cast<double>(d)) + 1e-6;
  const double hi = 50.0;
  constexpr int kScan = 5000;
  const double step = (hi - lo) / kScan;
  int peak = 0;
  double peak_value = -1.0;
  double prev = 0.0;
  bool decreasing_after_peak = true;
  for (int i = 0; i <= kScan; ++i) {
    const double v = vostrikova_tail(lo + i * step, n, d);
    if (v > peak_value) {
      peak_value = v;
      peak = i;
      decreasing_after_peak = true;
    } else if (i > 0 && v > prev) {
      decreasing_after_peak = false;
    }
    prev = v;
  }
  if (!decreasing_after_peak) throw NumericalFailure("vostrikova_critical: tail expansion is not monotone past its peak");

  // Golden-section refinement of the peak.
  double a = lo + std::max(0, peak - 1) * step;
  double b = lo + std::min(kScan, peak + 1) * step;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 100 && b - a > 1e-13; ++it) {
    const double c = b - g * (b - a);
    const double e = a + g * (b - a);
    if (vostrikova_tail(c, n, d) >= vostrikova_tail(e, n, d)) {
      b = e;
    } else {
      a = c;
    }
  }
  double left = 0.5 * (a + b);
  if (vostrikova_tail(left, n, d) < alpha)
    throw NumericalFailure("vostrikova_critical: no sign change for alpha = " + std::to_string(alpha) +
                           " (expansion maximum " + std::to_string(vostrikova_tail(left, n, d)) + ")");
  double right = hi;
  while (right - left > 1e-12) {
    const double mid = 0.5 * (left + right);
    if (vostrikova_tail(mid, n, d) > alpha) {
      left = mid;
    } else {
      right = mid;
    }
  }
  return 0.5 * (left + right);
}

struct ChangeEstimates {
  int standardized = 1;      ///< argmax with eigenvalue standardization
  int unstandardized = 1;    ///< argmax of the projected objective without standardization
  int fully_functional = 1;  ///< argmax of the weighted norm of the full CUSUM curve
};

inline ChangeEstimates change_estimates(const FunctionalSample& sample, const LrCovEstimate& est, int d) {
  const ScoreMatrix s = scores(sample, est, d);
  return ChangeEstimates{statistic(s, true).argmax, statistic(s, false).argmax,
                         fully_functional_statistic(sample).argmax};
}

struct TestConfig {
  int d = 1;
  LagWindowKernel lag_kernel{LagKernelKind::Plain};
  double h = 0.0;
  double alpha = 0.1;
  CriticalMethod critical = CriticalMethod::Vostrikova;
  int fourier_size = 25;        ///< working orthonormal basis for non-orthonormal input
  int conversion_points = 96;   ///< grid used for that change of basis

  void validate() const {
    if (d < 1) throw InvalidArgument("TestConfig: d must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("TestConfig: alpha must lie in (0,1)");
    if (!(h >= 0.0)) throw InvalidArgument("TestConfig: h must be >= 0");
    if (fourier_size < 1) throw InvalidArgument("TestConfig: fourier_size must be >= 1");
  }
};

struct TestResult {
  double statistic = 0.0;
  bool degenerate = false;
  std::optional<double> normalized;   ///< a(log n) T - b_d(log n), absent for n < 16
  std::optional<double> p_gumbel;     ///< absent for n < 16
  double p_vostrikova = 1.0;
  double critical_value = 0.0;
  CriticalMethod critical = CriticalMethod::Vostrikova;
  double alpha = 0.1;
  bool reject = false;
  ChangeEstimates k_hat;
  int d = 1;
  double h = 0.0;
  int n = 0;
  LagKernelKind lag_kernel = LagKernelKind::Plain;
  Eigen::VectorXd lambdas;
};

inline double critical_value(const TestConfig& cfg, int n) {
  return cfg.critical == CriticalMethod::Vostrikova ? vostrikova_critical(cfg.alpha, n, cfg.d)
                                                    : gumbel_critical(cfg.alpha, n, cfg.d);
}

/// Test on an orthonormal-basis sample with a precomputed estimate. `critical`
/// may be passed in when many samples share (alpha, n, d).
inline TestResult run_test_with(const FunctionalSample& sample, const LrCovEstimate& est, const TestConfig& cfg,
                                std::optional<double> critical = std::nullopt) {
  cfg.validate();
  const int n = sample.size();
  if (n < 2) throw InvalidArgument("run_test: need at least 2 curves");
  if (cfg.d > est.size()) throw InvalidArgument("run_test: d exceeds the working basis size");
  const ScoreMatrix s = scores(sample, est, cfg.d);
  const StatisticValue std_stat = statistic(s, true);

  TestResult r;
  r.statistic = std_stat.value;
  r.degenerate = std_stat.degenerate;
  r.n = n;
  r.d = cfg.d;
  r.h = cfg.h;
  r.alpha = cfg.alpha;
  r.critical = cfg.critical;
  r.lag_kernel = cfg.lag_kernel.kind;
  r.lambdas = s.lambdas;
  if (has_normalizers(n)) {
    const Normalizers nz = normalizers(n, cfg.d);
    r.normalized = nz.a * r.statistic - nz.b;
    r.p_gumbel = gumbel_pvalue(r.statistic, n, cfg.d);
  }
  r.p_vostrikova = vostrikova_pvalue(r.statistic, n, cfg.d);
  r.critical_value = critical ? *critical : critical_value(cfg, n);
  r.reject = r.statistic > r.critical_value;
  r.k_hat = ChangeEstimates{std_stat.argmax, statistic(s, false).argmax, fully_functional_statistic(sample).argmax};
  return r;
}

/// Moves `sample` into the orthonormal working basis if needed.
inline FunctionalSample to_working_basis(const FunctionalSample& sample, const TestConfig& cfg) {
  if (sample.basis()->orthonormal()) return sample;
  return change_basis(sample, fourier_basis(cfg.fourier_size),
                      Grid::equidistant(static_cast<std::size_t>(cfg.conversion_points)));
}

inline TestResult run_test(const FunctionalSample& sample, const TestConfig& cfg) {
  cfg.validate();
  const FunctionalSample working = to_working_basis(sample, cfg);
  const LrCovEstimate est = lrcov_estimate(working, cfg.lag_kernel, cfg.h);
  return run_test_with(working, est, cfg);
}

}  // namespace fcusum
