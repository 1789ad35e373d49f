#pragma once

// Function representation on [0,1]: grids, Fourier and B-spline bases,
// curves as coefficient vectors, least-squares smoothing and change of basis.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "fcusum/errors.hpp"
#include "fcusum/quadrature.hpp"

namespace fcusum {

/// Strictly increasing abscissae with first point 0 and last point 1.
class Grid {
 public:
  explicit Grid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw InvalidArgument("Grid: need at least 2 points");
    if (points_.front() != 0.0 || points_.back() != 1.0)
      throw InvalidArgument("Grid: points must start at 0 and end at 1");
    for (std::size_t k = 1; k < points_.size(); ++k) {
      if (!(points_[k] > points_[k - 1])) throw InvalidArgument("Grid: points must be strictly increasing");
    }
  }

  static Grid equidistant(std::size_t count) {
    if (count < 2) throw InvalidArgument("Grid: need at least 2 points");
    std::vector<double> p(count);
    for (std::size_t k = 0; k < count; ++k) p[k] = static_cast<double>(k) / static_cast<double>(count - 1);
    p.back() = 1.0;
    return Grid(std::move(p));
  }

  /// Affine min-max rescaling of arbitrary increasing abscissae onto [0,1].
  static Grid rescaled(std::span<const double> raw) {
    if (raw.size() < 2) throw InvalidArgument("Grid: need at least 2 points");
    const double lo = raw.front();
    const double hi = raw.back();
    if (!(hi > lo)) throw InvalidArgument("Grid: abscissae must be increasing");
    std::vector<double> p(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) p[k] = (raw[k] - lo) / (hi - lo);
    p.front() = 0.0;
    p.back() = 1.0;
    return Grid(std::move(p));
  }

  std::span<const double> points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  double operator[](std::size_t k) const { return points_[k]; }
  Eigen::VectorXd trapezoid_weights() const { return fcusum::trapezoid_weights(points_); }

  bool operator==(const Grid&) const = default;

 private:
  std::vector<double> points_;
};

enum class BasisKind { FourierOrthonormal, BSpline };

/// A finite function system on [0,1] together with its Gram matrix.
class Basis {
 public:
  BasisKind kind() const noexcept { return kind_; }
  int size() const noexcept { return size_; }
  int order() const noexcept { return order_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  const Eigen::MatrixXd& gram() const noexcept { return gram_; }
  bool orthonormal() const noexcept { return kind_ == BasisKind::FourierOrthonormal; }

  /// Writes the J basis values at t into `out`.
  void evaluate(double t, std::span<double> out) const {
    if (kind_ == BasisKind::FourierOrthonormal) {
      evaluate_fourier(t, out);
    } else {
      std::fill(out.begin(), out.end(), 0.0);
      double local[kMaxOrder];
      const int span = find_span(t);
      bspline_nonzero(span, t, local);
      for (int j = 0; j < order_; ++j) out[span - order_ + 1 + j] = local[j];
    }
  }

  Eigen::VectorXd evaluate(double t) const {
    Eigen::VectorXd v(size_);
    evaluate(t, std::span<double>(v.data(), static_cast<std::size_t>(size_)));
    return v;
  }

  /// T x J matrix of basis values at the grid points.
  Eigen::MatrixXd design_matrix(const Grid& grid) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(grid.size()), size_);
    std::vector<double> row(static_cast<std::size_t>(size_));
    for (std::size_t k = 0; k < grid.size(); ++k) {
      evaluate(grid[k], row);
      for (int j = 0; j < size_; ++j) m(static_cast<Eigen::Index>(k), j) = row[static_cast<std::size_t>(j)];
    }
    return m;
  }

  std::string describe() const {
    if (kind_ == BasisKind::FourierOrthonormal) return "fourier(" + std::to_string(size_) + ")";
    return "bspline(" + std::to_string(size_) + "," + std::to_string(order_) + ")";
  }

  bool operator==(const Basis& other) const noexcept {
    return kind_ == other.kind_ && size_ == other.size_ && order_ == other.order_ && knots_ == other.knots_;
  }

  static constexpr int kMaxOrder = 20;

 private:
  friend std::shared_ptr<const Basis> fourier_basis(int);
  friend std::shared_ptr<const Basis> bspline_basis(int, int);

  Basis(BasisKind kind, int size, int order) : kind_(kind), size_(size), order_(order) {}

  void evaluate_fourier(double t, std::span<double> out) const {
    out[0] = 1.0;
    const double root2 = std::numbers::sqrt2;
    for (int j = 1; j < size_; ++j) {
      const int k = (j + 1) / 2;
      const double arg = 2.0 * std::numbers::pi * k * t;
      out[static_cast<std::size_t>(j)] = (j % 2 == 1) ? root2 * std::cos(arg) : root2 * std::sin(arg);
    }
  }

  // Index s with knots[s] <= t < knots[s+1], clamped so that t = 1 uses the last span.
  int find_span(double t) const {
    const int last = size_ - 1;
    if (t >= knots_[static_cast<std::size_t>(last + 1)]) return last;
    if (t <= knots_[static_cast<std::size_t>(order_ - 1)]) return order_ - 1;
    const auto it = std::upper_bound(knots_.begin() + order_ - 1, knots_.begin() + last + 2, t);
    return static_cast<int>(it - knots_.begin()) - 1;
  }

  // Cox-de Boor recursion for the `order_` functions that are nonzero on `span`.
  void bspline_nonzero(int span, double t, double* values) const {
    double left[kMaxOrder], right[kMaxOrder];
    values[0] = 1.0;
    for (int j = 1; j < order_; ++j) {
      left[j] = t - knots_[static_cast<std::size_t>(span + 1 - j)];
      right[j] = knots_[static_cast<std::size_t>(span + j)] - t;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double temp = values[r] / (right[r + 1] + left[j - r]);
        values[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      values[j] = saved;
    }
  }

  BasisKind kind_;
  int size_;
  int order_;
  std::vector<double> knots_;
  Eigen::MatrixXd gram_;
};

using BasisPtr = std::shared_ptr<const Basis>;

/// Orthonormal trigonometric system: 1, sqrt2 cos(2 pi k t), sqrt2 sin(2 pi k t), ...
inline BasisPtr fourier_basis(int size) {
  if (size < 1) throw InvalidArgument("fourier_basis: size must be positive");
  auto b = std::shared_ptr<Basis>(new Basis(BasisKind::FourierOrthonormal, size, 0));
  b->gram_ = Eigen::MatrixXd::Identity(size, size);
  return b;
}

/// B-splines of the given order (4 = cubic) with equidistant interior knots.
/// The Gram matrix is integrated span by span with 10-point Gauss-Legendre.
inline BasisPtr bspline_basis(int size, int order = 4) {
  if (order < 1 || order > Basis::kMaxOrder) throw InvalidArgument("bspline_basis: order out of range");
  if (size < order) throw InvalidArgument("bspline_basis: size must be at least the order");
  auto b = std::shared_ptr<Basis>(new Basis(BasisKind::BSpline, size, order));
  const int spans = size - order + 1;
  b->knots_.reserve(static_cast<std::size_t>(size + order));
  for (int i = 0; i < order; ++i) b->knots_.push_back(0.0);
  for (int i = 1; i < spans; ++i) b->knots_.push_back(static_cast<double>(i) / spans);
  for (int i = 0; i < order; ++i) b->knots_.push_back(1.0);

  const auto [nodes, weights] = gauss_legendre(10);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(size, size);
  double local[Basis::kMaxOrder];
  for (int s = 0; s < spans; ++s) {
    const double a = static_cast<double>(s) / spans;
    const double c = static_cast<double>(s + 1) / spans;
    const double half = 0.5 * (c - a);
    const int span_index = s + order - 1;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double t = a + half * (nodes[q] + 1.0);
      b->bspline_nonzero(span_index, t, local);
      const int first = span_index - order + 1;
      for (int i = 0; i < order; ++i) {
        for (int j = i; j < order; ++j) gram(first + i, first + j) += half * weights[q] * local[i] * local[j];
      }
    }
  }
  gram.triangularView<Eigen::StrictlyLower>() = gram.transpose();
  b->gram_ = std::move(gram);
  return b;
}

/// A function on [0,1] stored as coefficients in a basis.
class Curve {
 public:
  Curve(BasisPtr basis, Eigen::VectorXd coeffs) : basis_(std::move(basis)), coeffs_(std::move(coeffs)) {
    if (!basis_) throw InvalidArgument("Curve: null basis");
    if (coeffs_.size() != basis_->size())
      throw InvalidArgument("Curve: expected " + std::to_string(basis_->size()) + " coefficients, got " +
                            std::to_string(coeffs_.size()));
  }

  static Curve zero(BasisPtr basis) {
    const int j = basis->size();
    return Curve(std::move(basis), Eigen::VectorXd::Zero(j));
  }

  const BasisPtr& basis() const noexcept { return basis_; }
  const Eigen::VectorXd& coeffs() const noexcept { return coeffs_; }

  double operator()(double t) const { return basis_->evaluate(t).dot(coeffs_); }

  Eigen::VectorXd values(const Grid& grid) const { return basis_->design_matrix(grid) * coeffs_; }

 private:
  BasisPtr basis_;
  Eigen::VectorXd coeffs_;
};

inline bool same_basis(const Basis& a, const Basis& b) { return &a == &b || a == b; }

/// L2 inner product via the Gram matrix. Summation is arranged so that
/// swapping the arguments yields a bit-identical result.
inline double inner_product(const Curve& u, const Curve& v) {
  if (!same_basis(*u.basis(), *v.basis()))
    throw IncompatibleBasis("inner_product: " + u.basis()->describe() + " vs " + v.basis()->describe());
  const auto& g = u.basis()->gram();
  const auto& a = u.coeffs();
  const auto& b = v.coeffs();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    sum += g(i, i) * (a[i] * b[i]);
    for (Eigen::Index j = i + 1; j < a.size(); ++j) {
      if (g(i, j) != 0.0) sum += g(i, j) * (a[i] * b[j] + a[j] * b[i]);
    }
  }
  return sum;
}

inline double l2_norm(const Curve& u) { return std::sqrt(std::max(0.0, inner_product(u, u))); }

/// Ordered curves sharing one basis; row i of `coefficients()` is curve i.
class FunctionalSample {
 public:
  FunctionalSample(BasisPtr basis, Eigen::MatrixXd coefficients)
      : basis_(std::move(basis)), coefficients_(std::move(coefficients)) {
    if (!basis_) throw InvalidArgument("FunctionalSample: null basis");
    if (coefficients_.cols() != basis_->size())
      throw InvalidArgument("FunctionalSample: coefficient columns do not match basis size");
  }

  static FunctionalSample from_curves(std::span<const Curve> curves) {
    if (curves.empty()) throw InvalidArgument("FunctionalSample: no curves");
    const BasisPtr& basis = curves.front().basis();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(curves.size()), basis->size());
    for (std::size_t i = 0; i < curves.size(); ++i) {
      if (!same_basis(*curves[i].basis(), *basis))
        throw IncompatibleBasis("FunctionalSample: curve " + std::to_string(i) + " uses a different basis");
      m.row(static_cast<Eigen::Index>(i)) = curves[i].coeffs().transpose();
    }
    return FunctionalSample(basis, std::move(m));
  }

  const BasisPtr& basis() const noexcept { return basis_; }
  const Eigen::MatrixXd& coefficients() const noexcept { return coefficients_; }
  int size() const noexcept { return static_cast<int>(coefficients_.rows()); }
  Curve curve(int i) const { return Curve(basis_, coefficients_.row(i).transpose()); }

  /// Sample values on a grid, one row per curve.
  Eigen::MatrixXd values(const Grid& grid) const { return coefficients_ * basis_->design_matrix(grid).transpose(); }

 private:
  BasisPtr basis_;
  Eigen::MatrixXd coefficients_;
};

/// Ordinary least squares of grid samples onto a basis. The projector is
/// factored once so repeated fits cost one J x T product.
class CurveFitter {
 public:
  CurveFitter(Grid grid, BasisPtr basis) : grid_(std::move(grid)), basis_(std::move(basis)) {
    const auto t = static_cast<Eigen::Index>(grid_.size());
    const int j = basis_->size();
    if (t < j)
      throw SingularFit("fit: " + basis_->describe() + " needs at least " + std::to_string(j) +
                        " grid points, got " + std::to_string(t));
    design_ = basis_->design_matrix(grid_);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design_);
    qr.setThreshold(1e-10);
    if (qr.rank() < j)
      throw SingularFit("fit: design matrix of " + basis_->describe() + " on " + std::to_string(t) +
                        " grid points has rank " + std::to_string(qr.rank()) + " < " + std::to_string(j));
    projector_ = qr.solve(Eigen::MatrixXd::Identity(t, t));
  }

  const Grid& grid() const noexcept { return grid_; }
  const BasisPtr& basis() const noexcept { return basis_; }
  const Eigen::MatrixXd& design() const noexcept { return design_; }
  const Eigen::MatrixXd& projector() const noexcept { return projector_; }

  Curve fit(std::span<const double> values) const {
    check_length(values.size());
    Eigen::Map<const Eigen::VectorXd> y(values.data(), static_cast<Eigen::Index>(values.size()));
    return Curve(basis_, projector_ * y);
  }

  Curve fit(const Eigen::VectorXd& values) const {
    check_length(static_cast<std::size_t>(values.size()));
    return Curve(basis_, projector_ * values);
  }

  /// Fits every row of an n x T value matrix.
  FunctionalSample fit_rows(const Eigen::MatrixXd& values) const {
    check_length(static_cast<std::size_t>(values.cols()));
    return FunctionalSample(basis_, values * projector_.transpose());
  }

 private:
  void check_length(std::size_t got) const {
    if (got != grid_.size())
      throw InvalidArgument("fit: expected " + std::to_string(grid_.size()) + " values, got " + std::to_string(got));
  }

  Grid grid_;
  BasisPtr basis_;
  Eigen::MatrixXd design_;
  Eigen::MatrixXd projector_;
};

inline Curve fit_curve(std::span<const double> values, const Grid& grid, BasisPtr basis) {
  return CurveFitter(grid, std::move(basis)).fit(values);
}

/// Linear map taking coefficients in `source` to least-squares coefficients in
/// the fitter's basis, by evaluation on the fitter's grid.
inline Eigen::MatrixXd basis_transfer_matrix(const Basis& source, const CurveFitter& target) {
  return target.projector() * source.design_matrix(target.grid());
}

inline FunctionalSample change_basis(const FunctionalSample& sample, const CurveFitter& target) {
  const Eigen::MatrixXd transfer = basis_transfer_matrix(*sample.basis(), target);
  return FunctionalSample(target.basis(), sample.coefficients() * transfer.transpose());
}

inline FunctionalSample change_basis(const FunctionalSample& sample, BasisPtr target, const Grid& grid) {
  return change_basis(sample, CurveFitter(grid, std::move(target)));
}

}  // namespace fcusum
