#pragma once

// Lag-window (Bartlett-type) estimation of the long-run covariance operator
// and its eigenstructure, in an orthonormal working basis.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "fcusum/basis.hpp"
#include "fcusum/errors.hpp"

namespace fcusum {

enum class LagKernelKind { Plain, Bartlett, Parzen, FlatTop };

inline std::string to_string(LagKernelKind k) {
  switch (k) {
    case LagKernelKind::Plain: return "plain";
    case LagKernelKind::Bartlett: return "bartlett";
    case LagKernelKind::Parzen: return "parzen";
    case LagKernelKind::FlatTop: return "flattop";
  }
  return "?";
}

inline LagKernelKind parse_lag_kernel(const std::string& s) {
  if (s == "plain") return LagKernelKind::Plain;
  if (s == "bartlett") return LagKernelKind::Bartlett;
  if (s == "parzen") return LagKernelKind::Parzen;
  if (s == "flattop") return LagKernelKind::FlatTop;
  throw InvalidArgument("unknown lag kernel '" + s + "' (expected plain, bartlett, parzen or flattop)");
}

/// Symmetric lag window with K(0) = 1 and support [-c, c].
struct LagWindowKernel {
  LagKernelKind kind = LagKernelKind::Plain;

  double support() const noexcept { return 1.0; }

  double operator()(double x) const noexcept {
    const double a = std::abs(x);
    if (a > support()) return 0.0;
    switch (kind) {
      case LagKernelKind::Plain: return 1.0;
      case LagKernelKind::Bartlett: return 1.0 - a;
      case LagKernelKind::Parzen:
        return a <= 0.5 ? 1.0 - 6.0 * a * a + 6.0 * a * a * a : 2.0 * (1.0 - a) * (1.0 - a) * (1.0 - a);
      case LagKernelKind::FlatTop: return a <= 0.5 ? 1.0 : 2.0 * (1.0 - a);
    }
    return 0.0;
  }
};

/// Sample coefficients centred at the sample mean. The mean is accumulated
/// relative to the first curve, so identical curves centre to exact zeros.
inline Eigen::MatrixXd centered_coefficients(const FunctionalSample& sample) {
  const Eigen::MatrixXd& x = sample.coefficients();
  const Eigen::RowVectorXd anchor = x.row(0);
  Eigen::MatrixXd centered = x.rowwise() - anchor;
  const Eigen::RowVectorXd mean = centered.colwise().mean();
  centered.rowwise() -= mean;
  return centered;
}

inline void require_orthonormal(const FunctionalSample& sample, const char* who) {
  if (!sample.basis()->orthonormal())
    throw IncompatibleBasis(std::string(who) + ": operator estimation needs an orthonormal basis, got " +
                            sample.basis()->describe() + " (convert with change_basis first)");
}

/// Lag-r autocovariance (1/n) sum_{i=1}^{n-r} a_i a_{i+r}^T of pre-centred rows.
inline Eigen::MatrixXd lag_cov_centered(const Eigen::MatrixXd& centered, int r) {
  const auto n = centered.rows();
  if (r < 0 || r >= n) throw InvalidArgument("lag_cov: lag must satisfy 0 <= r < n");
  if (r == 0) {
    // rankUpdate fills one triangle; mirroring it keeps C_0 exactly symmetric.
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(centered.cols(), centered.cols());
    c.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(n));
    return Eigen::MatrixXd(c.selfadjointView<Eigen::Lower>());
  }
  const auto m = n - r;
  return (centered.topRows(m).transpose() * centered.bottomRows(m)) / static_cast<double>(n);
}

inline Eigen::MatrixXd lag_cov(const FunctionalSample& sample, int r) {
  require_orthonormal(sample, "lag_cov");
  if (r < 0 || r >= sample.size()) throw InvalidArgument("lag_cov: lag must satisfy 0 <= r < n");
  return lag_cov_centered(centered_coefficients(sample), r);
}

/// floor(c' * n^(1/gamma)); gamma > 3 is required by the consistency rate.
inline double default_bandwidth(int n, double gamma = 4.0, double constant = 1.0) {
  if (n < 2) throw InvalidArgument("default_bandwidth: n must be >= 2");
  if (!(gamma > 3.0)) throw InvalidArgument("default_bandwidth: gamma must exceed 3");
  return std::floor(constant * std::pow(static_cast<double>(n), 1.0 / gamma) + 1e-12);
}

struct EigenPairs {
  Eigen::VectorXd values;         ///< |eigenvalue|, descending
  Eigen::VectorXd signed_values;  ///< eigenvalues before the absolute value, same order
  Eigen::MatrixXd vectors;        ///< unit coefficient vectors as columns, same order
};

/// Symmetric eigendecomposition with absolute eigenvalues sorted descending.
/// Ties in |lambda| keep the order of the signed eigenvalues (descending).
/// Each eigenvector's largest-magnitude coefficient is made positive.
inline EigenPairs eigen_decompose(const Eigen::MatrixXd& c) {
  if (c.rows() != c.cols()) throw InvalidArgument("eigen_decompose: matrix must be square");
  const double asym = (c - c.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8) throw InvalidArgument("eigen_decompose: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(c);
  if (solver.info() != Eigen::Success) throw NumericalFailure("eigen_decompose: eigensolver did not converge");

  const auto j = c.rows();
  // Eigen sorts ascending; walk it backwards to get the signed-descending order.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(j));
  for (Eigen::Index i = 0; i < j; ++i) order[static_cast<std::size_t>(i)] = j - 1 - i;
  const Eigen::VectorXd& ev = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(ev[a]) > std::abs(ev[b]); });

  EigenPairs out{Eigen::VectorXd(j), Eigen::VectorXd(j), Eigen::MatrixXd(j, j)};
  for (Eigen::Index k = 0; k < j; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.signed_values[k] = ev[src];
    out.values[k] = std::abs(ev[src]);
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    out.vectors.col(k) = v;
  }
  return out;
}

/// Long-run covariance estimate together with its eigenstructure.
struct LrCovEstimate {
  BasisPtr basis;
  Eigen::MatrixXd matrix;  ///< coefficients of the kernel in the orthonormal basis
  EigenPairs eigen;
  double bandwidth = 0.0;
  int max_lag = 0;
  LagWindowKernel kernel;

  int size() const noexcept { return static_cast<int>(matrix.rows()); }
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigen.values; }
  Curve eigenfunction(int j) const { return Curve(basis, eigen.vectors.col(j)); }
};

/// C = C_0 + sum_{r=1}^{floor(c h)} K(r/h) (C_r + C_r^T); C = C_0 when h = 0.
inline LrCovEstimate lrcov_estimate(const FunctionalSample& sample, LagWindowKernel kernel, double h) {
  require_orthonormal(sample, "lrcov_estimate");
  if (!(h >= 0.0)) throw InvalidArgument("lrcov_estimate: bandwidth must be >= 0");
  if (sample.size() < 2) throw InvalidArgument("lrcov_estimate: need at least 2 curves");
  const Eigen::MatrixXd centered = centered_coefficients(sample);
  LrCovEstimate est;
  est.basis = sample.basis();
  est.bandwidth = h;
  est.kernel = kernel;
  est.matrix = lag_cov_centered(centered, 0);
  if (h > 0.0) {
    const int limit = std::min(static_cast<int>(std::floor(kernel.support() * h + 1e-12)), sample.size() - 1);
    for (int r = 1; r <= limit; ++r) {
      const double weight = kernel(r / h);
      if (weight == 0.0) continue;
      const Eigen::MatrixXd cr = lag_cov_centered(centered, r);
      est.matrix += weight * (cr + cr.transpose());
      est.max_lag = r;
    }
  }
  est.eigen = eigen_decompose(est.matrix);
  return est;
}

}  // namespace fcusum
