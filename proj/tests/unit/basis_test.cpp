#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fcusum/basis.hpp"
#include "support/oracles.hpp"

namespace fcusum {
namespace {

TEST(Grid, RejectsMalformedPoints) {
  EXPECT_THROW(Grid({0.0}), InvalidArgument);
  EXPECT_THROW(Grid({0.1, 1.0}), InvalidArgument);
  EXPECT_THROW(Grid({0.0, 0.5, 0.5, 1.0}), InvalidArgument);
  EXPECT_NO_THROW(Grid({0.0, 0.3, 1.0}));
}

TEST(Grid, RescalesRawAbscissae) {
  const std::vector<double> raw{15.0, 30.0, 45.0, 60.0};
  const Grid g = Grid::rescaled(raw);
  EXPECT_DOUBLE_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(g[3], 1.0);
}

TEST(FourierBasis, SingleConstantFunction) {
  const auto b = fourier_basis(1);
  EXPECT_EQ(b->size(), 1);
  EXPECT_DOUBLE_EQ(b->gram()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(b->evaluate(0.37)[0], 1.0);
}

TEST(FourierBasis, RejectsZeroSize) { EXPECT_THROW(fourier_basis(0), InvalidArgument); }

TEST(FourierBasis, CosSinPairOrthogonalOnTrapezoid) {
  const auto b = fourier_basis(3);
  const double ip = testing_support::trapezoid_product(*b, 1, 2, 1001);
  EXPECT_NEAR(ip, 0.0, 1e-8);
}

TEST(FourierBasis, GramMatchesDenseQuadratureUpTo64) {
  for (int j : {1, 2, 3, 25, 64}) {
    const auto b = fourier_basis(j);
    const Eigen::MatrixXd oracle = testing_support::trapezoid_gram(*b, 2001);
    EXPECT_LE((oracle - Eigen::MatrixXd::Identity(j, j)).cwiseAbs().maxCoeff(), 1e-8) << "J=" << j;
    EXPECT_LE((b->gram() - oracle).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(BSplineBasis, OrderOneSingleFunctionIsIndicator) {
  const auto b = bspline_basis(1, 1);
  EXPECT_DOUBLE_EQ(b->gram()(0, 0), 1.0);
  for (double t : {0.0, 0.25, 0.999, 1.0}) EXPECT_DOUBLE_EQ(b->evaluate(t)[0], 1.0);
}

TEST(BSplineBasis, RejectsSizeBelowOrder) { EXPECT_THROW(bspline_basis(3, 4), InvalidArgument); }

TEST(BSplineBasis, PartitionOfUnity) {
  for (int j : {4, 7, 25}) {
    const auto b = bspline_basis(j, 4);
    for (int i = 0; i <= 200; ++i) {
      const double t = i / 200.0;
      EXPECT_NEAR(b->evaluate(t).sum(), 1.0, 1e-10) << "J=" << j << " t=" << t;
    }
  }
}

TEST(BSplineBasis, GramIsBandedAndMatchesQuadrature) {
  const auto b = bspline_basis(25, 4);
  const auto& g = b->gram();
  for (int i = 0; i < 25; ++i) {
    for (int j = 0; j < 25; ++j) {
      EXPECT_DOUBLE_EQ(g(i, j), g(j, i));
      if (std::abs(i - j) > 3) {
        EXPECT_NEAR(g(i, j), 0.0, 1e-12);
      }
    }
  }
  const Eigen::MatrixXd oracle = testing_support::trapezoid_gram(*b, 100001);
  EXPECT_LE((g - oracle).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitCurve, ZeroDataGivesZeroCoefficients) {
  const Grid g = Grid::equidistant(96);
  const std::vector<double> zeros(96, 0.0);
  const Curve c = fit_curve(zeros, g, bspline_basis(25, 4));
  EXPECT_EQ(c.coeffs().cwiseAbs().maxCoeff(), 0.0);
}

TEST(FitCurve, RecoversRepresentableFourierFunction) {
  const Grid g = Grid::equidistant(101);
  const auto b = fourier_basis(5);
  std::vector<double> v(101);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::numbers::sqrt2 * std::cos(2.0 * std::numbers::pi * g[k]);
  const Curve c = fit_curve(v, g, b);
  Eigen::VectorXd e2 = Eigen::VectorXd::Zero(5);
  e2[1] = 1.0;
  EXPECT_LE((c.coeffs() - e2).cwiseAbs().maxCoeff(), 1e-8);
  // Independent check: direct projection by quadrature.
  for (int j = 0; j < 5; ++j) {
    EXPECT_NEAR(c.coeffs()[j], testing_support::trapezoid_projection(v, g, *b, j), 1e-8);
  }
}

TEST(FitCurve, SmoothsSineWithCubicSplines) {
  const Grid g = Grid::equidistant(96);
  std::vector<double> v(96);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::sin(g[k]);
  const Curve c = fit_curve(v, g, bspline_basis(25, 4));
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = i / 999.0;
    worst = std::max(worst, std::abs(c(t) - std::sin(t)));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(FitCurve, RankDeficientDesignIsReported) {
  EXPECT_THROW(CurveFitter(Grid::equidistant(3), fourier_basis(5)), SingularFit);
  std::vector<double> clustered{0.0};
  for (int i = 1; i < 30; ++i) clustered.push_back(i * 0.001);
  clustered.push_back(1.0);
  try {
    CurveFitter(Grid(clustered), bspline_basis(25, 4));
    FAIL() << "expected SingularFit";
  } catch (const SingularFit& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bspline(25,4)"), std::string::npos);
    EXPECT_NE(msg.find("31 grid points"), std::string::npos);
  }
}

TEST(FitCurve, IsAProjectionOnRepresentableCurves) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  const Grid g = Grid::equidistant(96);
  for (const auto& basis : {bspline_basis(25, 4), fourier_basis(25), bspline_basis(10, 3)}) {
    Eigen::VectorXd coeffs(basis->size());
    for (auto& c : coeffs) c = normal(rng);
    const Curve original(basis, coeffs);
    const Eigen::VectorXd values = original.values(g);
    const Curve refit = CurveFitter(g, basis).fit(values);
    EXPECT_LE((refit.coeffs() - coeffs).cwiseAbs().maxCoeff(), 1e-8) << basis->describe();
  }
}

TEST(InnerProduct, FourierOrthonormality) {
  const auto b = fourier_basis(3);
  const Curve phi1(b, Eigen::Vector3d(1, 0, 0));
  const Curve phi2(b, Eigen::Vector3d(0, 1, 0));
  const Curve phi3(b, Eigen::Vector3d(0, 0, 1));
  EXPECT_DOUBLE_EQ(inner_product(phi1, phi1), 1.0);
  EXPECT_DOUBLE_EQ(inner_product(phi2, phi3), 0.0);
}

TEST(InnerProduct, BSplineOverlapMatchesQuadrature) {
  const auto b = bspline_basis(25, 4);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(25), v = Eigen::VectorXd::Zero(25);
  u[5] = 1.0;
  v[7] = 1.0;
  const double oracle = testing_support::trapezoid_product(*b, 5, 7, 100001);
  EXPECT_GT(std::abs(oracle), 1e-4);
  EXPECT_NEAR(inner_product(Curve(b, u), Curve(b, v)), oracle, 1e-8);
}

TEST(InnerProduct, RejectsMixedBases) {
  const Curve a = Curve::zero(fourier_basis(4));
  const Curve b = Curve::zero(bspline_basis(4, 4));
  EXPECT_THROW(inner_product(a, b), IncompatibleBasis);
}

TEST(InnerProduct, ExactlySymmetricAndPositive) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (const auto& basis : {bspline_basis(25, 4), fourier_basis(17), bspline_basis(9, 2)}) {
    for (int rep = 0; rep < 50; ++rep) {
      Eigen::VectorXd a(basis->size()), c(basis->size());
      for (int i = 0; i < basis->size(); ++i) {
        a[i] = normal(rng);
        c[i] = normal(rng) * 1e3;
      }
      const Curve u(basis, a), v(basis, c);
      EXPECT_EQ(inner_product(u, v), inner_product(v, u));
      EXPECT_GE(inner_product(u, u), -1e-12);
    }
  }
}

TEST(ChangeBasis, ConstantGoesToFirstFourierCoefficient) {
  const auto bs = bspline_basis(25, 4);
  const FunctionalSample ones(bs, Eigen::MatrixXd::Ones(1, 25));
  const FunctionalSample out = change_basis(ones, fourier_basis(25), Grid::equidistant(96));
  Eigen::RowVectorXd expected = Eigen::RowVectorXd::Zero(25);
  expected[0] = 1.0;
  EXPECT_LE((out.coefficients().row(0) - expected).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ChangeBasis, ZeroCurveStaysZero) {
  const FunctionalSample zero(fourier_basis(25), Eigen::MatrixXd::Zero(2, 25));
  const FunctionalSample out = change_basis(zero, bspline_basis(25, 4), Grid::equidistant(96));
  EXPECT_EQ(out.coefficients().cwiseAbs().maxCoeff(), 0.0);
}

TEST(ChangeBasis, RoundTripThroughSplinesPreservesFourierFunction) {
  const auto fb = fourier_basis(25);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, 25);
  c(0, 1) = 1.0;
  const FunctionalSample phi2(fb, c);
  const Grid g = Grid::equidistant(96);
  const FunctionalSample spline = change_basis(phi2, bspline_basis(25, 4), g);
  const FunctionalSample back = change_basis(spline, fb, g);
  EXPECT_LE((back.coefficients() - c).cwiseAbs().maxCoeff(), 1e-3);
  const double n0 = l2_norm(phi2.curve(0));
  EXPECT_NEAR(l2_norm(spline.curve(0)) / n0, 1.0, 1e-3);
  EXPECT_NEAR(l2_norm(back.curve(0)) / n0, 1.0, 1e-3);
}

TEST(ChangeBasis, RejectsTooCoarseGrid) {
  const FunctionalSample s(fourier_basis(5), Eigen::MatrixXd::Zero(2, 5));
  EXPECT_THROW(change_basis(s, bspline_basis(25, 4), Grid::equidistant(20)), SingularFit);
}

}  // namespace
}  // namespace fcusum
