#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fcusum/errors.hpp"

namespace fcusum {

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence. Exact for polynomials of degree 2m-1.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int m) {
  if (m < 1) throw InvalidArgument("gauss_legendre: need at least one node");
  std::vector<double> nodes(m), weights(m);
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = m * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[m - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[i] = w;
    weights[m - 1 - i] = w;
  }
  if (m % 2 == 1) nodes[m / 2] = 0.0;
  return {nodes, weights};
}

/// Composite trapezoid weights for the abscissae `t`.
inline Eigen::VectorXd trapezoid_weights(std::span<const double> t) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double half = 0.5 * (t[k + 1] - t[k]);
    w[k] += half;
    w[k + 1] += half;
  }
  return w;
}

}  // namespace fcusum
