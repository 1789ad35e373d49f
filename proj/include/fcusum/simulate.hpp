#pragma once

// Functional AR(1) simulation with Brownian-bridge shocks, a calibrated
// integral operator and an optional mean shift.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "fcusum/basis.hpp"
#include "fcusum/errors.hpp"
#include "fcusum/random.hpp"

namespace fcusum {

/// Standard Brownian bridge at the grid points: W(t_k) - t_k W(1) with W
/// built from independent Gaussian increments. Endpoints are exactly zero.
inline Eigen::VectorXd brownian_bridge_path(const Grid& grid, Engine& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto t = grid.points();
  Eigen::VectorXd w(static_cast<Eigen::Index>(t.size()));
  w[0] = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) w[k] = w[k - 1] + std::sqrt(t[k] - t[k - 1]) * normal(rng);
  const double end = w[w.size() - 1];
  for (std::size_t k = 0; k < t.size(); ++k) w[k] -= t[k] * end;
  w[w.size() - 1] = 0.0;
  return w;
}

inline Curve brownian_bridge_shock(const CurveFitter& fitter, Engine& rng) {
  return fitter.fit(brownian_bridge_path(fitter.grid(), rng));
}

enum class KernelKind { Gaussian, Wiener, Custom };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Gaussian: return "gaussian";
    case KernelKind::Wiener: return "wiener";
    case KernelKind::Custom: return "custom";
  }
  return "?";
}

inline KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "gaussian" || s == "G") return KernelKind::Gaussian;
  if (s == "wiener" || s == "W") return KernelKind::Wiener;
  throw InvalidArgument("unknown integral kernel '" + s + "' (expected gaussian or wiener)");
}

/// Integral kernel Psi(t,s) = scale * base(t,s), scaled to a target
/// Hilbert-Schmidt norm psi.
class IntegralKernel {
 public:
  KernelKind kind() const noexcept { return kind_; }
  double psi() const noexcept { return psi_; }
  double scale() const noexcept { return scale_; }
  double base_norm() const noexcept { return base_norm_; }

  double base(double t, double s) const { return base_(t, s); }
  double operator()(double t, double s) const { return scale_ * base_(t, s); }

 private:
  friend IntegralKernel calibrate_kernel(KernelKind, double, int);
  friend IntegralKernel calibrate_custom_kernel(BasisPtr, Eigen::MatrixXd, double, int);

  KernelKind kind_ = KernelKind::Gaussian;
  double psi_ = 0.0;
  double scale_ = 0.0;
  double base_norm_ = 0.0;
  std::function<double(double, double)> base_;
};

/// L2([0,1]^2) norm of `f` by the tensor trapezoid rule on resolution^2 points.
inline double kernel_l2_norm(const std::function<double(double, double)>& f, int resolution) {
  const Grid g = Grid::equidistant(static_cast<std::size_t>(resolution));
  const Eigen::VectorXd w = g.trapezoid_weights();
  double total = 0.0;
  for (int i = 0; i < resolution; ++i) {
    double row = 0.0;
    for (int j = 0; j < resolution; ++j) {
      const double v = f(g[i], g[j]);
      row += w[j] * v * v;
    }
    total += w[i] * row;
  }
  return std::sqrt(total);
}

namespace detail {
inline void check_psi(double psi) {
  if (!(psi >= 0.0)) throw InvalidArgument("calibrate_kernel: psi must be non-negative");
  if (!(psi < 1.0)) throw InvalidArgument("calibrate_kernel: psi must be < 1 for a stationary solution");
}
}  // namespace detail

/// Gaussian exp((t^2+s^2)/2) or Wiener min(t,s), scaled to norm psi.
inline IntegralKernel calibrate_kernel(KernelKind kind, double psi, int resolution = 1001) {
  detail::check_psi(psi);
  if (resolution < 500) throw InvalidArgument("calibrate_kernel: quadrature resolution must be >= 500");
  IntegralKernel k;
  k.kind_ = kind;
  k.psi_ = psi;
  switch (kind) {
    case KernelKind::Gaussian: k.base_ = [](double t, double s) { return std::exp(0.5 * (t * t + s * s)); }; break;
    case KernelKind::Wiener: k.base_ = [](double t, double s) { return std::min(t, s); }; break;
    case KernelKind::Custom: throw InvalidArgument("calibrate_kernel: use calibrate_custom_kernel for custom kernels");
  }
  k.base_norm_ = kernel_l2_norm(k.base_, resolution);
  k.scale_ = psi / k.base_norm_;
  return k;
}

/// Kernel sum_{a,b} M(a,b) phi_a(t) phi_b(s) in `basis`, scaled to norm psi.
inline IntegralKernel calibrate_custom_kernel(BasisPtr basis, Eigen::MatrixXd coefficients, double psi,
                                              int resolution = 1001) {
  detail::check_psi(psi);
  if (coefficients.rows() != basis->size() || coefficients.cols() != basis->size())
    throw InvalidArgument("calibrate_custom_kernel: coefficient matrix must be J x J");
  IntegralKernel k;
  k.kind_ = KernelKind::Custom;
  k.psi_ = psi;
  k.base_ = [basis, m = std::move(coefficients)](double t, double s) {
    return basis->evaluate(t).dot(m * basis->evaluate(s));
  };
  k.base_norm_ = kernel_l2_norm(k.base_, resolution);
  if (!(k.base_norm_ > 0.0)) throw InvalidArgument("calibrate_custom_kernel: kernel has zero norm");
  k.scale_ = psi / k.base_norm_;
  return k;
}

/// Coefficient-space matrix of y -> fit( t_k -> sum_j w_j Psi(t_k, s_j) y(s_j) ):
/// evaluate on the grid, integrate by the trapezoid rule, refit.
inline Eigen::MatrixXd integral_operator_matrix(const IntegralKernel& kernel, const CurveFitter& fitter) {
  const Grid& g = fitter.grid();
  const auto t = static_cast<Eigen::Index>(g.size());
  const Eigen::VectorXd w = g.trapezoid_weights();
  Eigen::MatrixXd quad(t, t);
  for (Eigen::Index k = 0; k < t; ++k) {
    for (Eigen::Index j = 0; j < t; ++j) quad(k, j) = kernel(g[k], g[j]) * w[j];
  }
  return fitter.projector() * quad * fitter.design();
}

inline Curve integral_transform(const IntegralKernel& kernel, const Curve& y, const CurveFitter& fitter) {
  if (!same_basis(*y.basis(), *fitter.basis()))
    throw IncompatibleBasis("integral_transform: curve in " + y.basis()->describe() + ", working basis is " +
                            fitter.basis()->describe());
  const Grid& g = fitter.grid();
  const Eigen::VectorXd yv = fitter.design() * y.coeffs();
  const Eigen::VectorXd w = g.trapezoid_weights();
  Eigen::VectorXd out(static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) acc += kernel(g[k], g[j]) * w[j] * yv[j];
    out[k] = acc;
  }
  return fitter.fit(out);
}

enum class ChangeShape { Sin, Constant, Linear };

inline std::string to_string(ChangeShape s) {
  switch (s) {
    case ChangeShape::Sin: return "sin";
    case ChangeShape::Constant: return "constant";
    case ChangeShape::Linear: return "linear";
  }
  return "?";
}

inline ChangeShape parse_change_shape(const std::string& s) {
  if (s == "sin") return ChangeShape::Sin;
  if (s == "constant") return ChangeShape::Constant;
  if (s == "linear") return ChangeShape::Linear;
  throw InvalidArgument("unknown change shape '" + s + "' (expected sin, constant or linear)");
}

/// Mean shift amplitude * shape(t) added to every curve after floor(n * theta).
struct ChangeSpec {
  double theta = 0.5;
  ChangeShape shape = ChangeShape::Sin;
  double amplitude = 1.0;

  double delta(double t) const {
    switch (shape) {
      case ChangeShape::Sin: return amplitude * std::sin(t);
      case ChangeShape::Constant: return amplitude;
      case ChangeShape::Linear: return amplitude * t;
    }
    return 0.0;
  }

  Curve delta_curve(const CurveFitter& fitter) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(fitter.grid().size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = delta(fitter.grid()[static_cast<std::size_t>(k)]);
    return fitter.fit(v);
  }

  int change_index(int n) const { return static_cast<int>(std::floor(n * theta)); }
};

struct SimSpec {
  int n = 100;
  KernelKind kernel = KernelKind::Gaussian;
  double psi = 0.0;
  std::optional<ChangeSpec> change;
  int burn_in = 100;
  std::uint64_t seed = 1;
  int grid_points = 96;
  int basis_size = 25;
  int basis_order = 4;

  void validate() const {
    if (n < 2) throw InvalidArgument("SimSpec: n must be >= 2");
    if (burn_in < 0) throw InvalidArgument("SimSpec: burn_in must be >= 0");
    if (change && !(change->theta > 0.0 && change->theta < 1.0))
      throw InvalidArgument("SimSpec: change theta must lie in (0,1)");
    if (!(psi >= 0.0 && psi < 1.0)) throw InvalidArgument("SimSpec: psi must lie in [0,1)");
    if (kernel == KernelKind::Custom) throw InvalidArgument("SimSpec: custom kernels are not configurable here");
  }
};

/// Reusable generator for one SimSpec: the working basis, the fitter and the
/// AR transition matrix are built once, each call to `generate` draws one
/// replication from its own seed.
class Far1Simulator {
 public:
  explicit Far1Simulator(const SimSpec& spec)
      : spec_((spec.validate(), spec)),
        fitter_(Grid::equidistant(static_cast<std::size_t>(spec.grid_points)),
                bspline_basis(spec.basis_size, spec.basis_order)),
        kernel_(calibrate_kernel(spec.kernel, spec.psi)),
        transition_(integral_operator_matrix(kernel_, fitter_)) {
    if (spec_.change) delta_ = spec_.change->delta_curve(fitter_).coeffs();
  }

  const SimSpec& spec() const noexcept { return spec_; }
  const CurveFitter& fitter() const noexcept { return fitter_; }
  const IntegralKernel& kernel() const noexcept { return kernel_; }
  const Eigen::MatrixXd& transition() const noexcept { return transition_; }

  FunctionalSample generate() const { return generate(spec_.seed); }

  FunctionalSample generate(std::uint64_t seed) const {
    Engine rng = make_engine(seed);
    const int j = fitter_.basis()->size();
    const int n = spec_.n;
    Eigen::MatrixXd out(n, j);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(j);
    const int total = spec_.burn_in + n;
    for (int step = 0; step < total; ++step) {
      Eigen::VectorXd eps = fitter_.projector() * brownian_bridge_path(fitter_.grid(), rng);
      if (step == 0) {
        y = std::move(eps);
      } else {
        y = transition_ * y + eps;
      }
      const int i = step - spec_.burn_in;  // 0-based observation index
      if (i >= 0) out.row(i) = y.transpose();
    }
    if (spec_.change) {
      const int m = spec_.change->change_index(n);
      for (int i = m; i < n; ++i) out.row(i) += delta_.transpose();
    }
    return FunctionalSample(fitter_.basis(), std::move(out));
  }

 private:
  SimSpec spec_;
  CurveFitter fitter_;
  IntegralKernel kernel_;
  Eigen::MatrixXd transition_;
  Eigen::VectorXd delta_;
};

inline FunctionalSample far1_generate(const SimSpec& spec) { return Far1Simulator(spec).generate(); }

}  // namespace fcusum
