#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "chaosop/random_field.hpp"
#include "oracles.hpp"

using namespace chaosop;

namespace {

KLBasis line_basis(double ell, double target, std::optional<Eigen::Index> fixed = std::nullopt, Eigen::Index m = 200) {
  KernelSpec k;
  k.ell = ell;
  return kl_decompose(k, uniform_grid(0.0, 1.0, m), target, fixed);
}

}  // namespace

TEST(RandomField, EigenfunctionsAreWeightOrthonormal) {
  const auto b = line_basis(0.2, 0.9999);
  const Eigen::MatrixXd g = b.eigenfunctions.transpose() * b.grid.weights.asDiagonal() * b.eigenfunctions;
  EXPECT_LE((g - Eigen::MatrixXd::Identity(b.modes(), b.modes())).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index k = 1; k < b.modes(); ++k) EXPECT_GE(b.eigenvalues(k - 1), b.eigenvalues(k));
  EXPECT_GT(b.eigenvalues(b.modes() - 1), 0.0);
}

// 99% capture at ell = 0.2 on [0,1]. The smallest such truncation of this
// Nystrom discretization keeps 5 modes (0.991); fixing 6 reports 0.998.
TEST(RandomField, CaptureFractionSelection) {
  const auto b = line_basis(0.2, 0.99);
  EXPECT_EQ(b.modes(), 5);
  EXPECT_GE(b.captured_fraction, 0.99);
  EXPECT_NEAR(b.captured_fraction, 0.9911, 5e-4);
  const auto six = line_basis(0.2, 0.99, 6);
  EXPECT_EQ(six.modes(), 6);
  EXPECT_NEAR(six.captured_fraction, 0.9979, 5e-4);
}

TEST(RandomField, FullTargetKeepsEveryMode) {
  const auto b = line_basis(0.05, 1.0 - std::numeric_limits<double>::epsilon(), std::nullopt, 8);
  EXPECT_EQ(b.modes(), 8);
}

TEST(RandomField, TraceIdentity) {
  KernelSpec k;
  k.sigma = 1.5;
  k.ell = 0.2;
  const auto b = kl_decompose(k, uniform_grid(0.0, 2.0, 250), 0.99);
  EXPECT_NEAR(b.total_variance, 1.5 * 1.5 * 2.0, 1e-3);
}

TEST(RandomField, ModeCountMonotoneInLengthScale) {
  const auto r1 = line_basis(0.1, 0.99).modes();
  const auto r2 = line_basis(0.2, 0.99).modes();
  const auto r5 = line_basis(0.5, 0.99).modes();
  EXPECT_GE(r1, r2);
  EXPECT_GE(r2, r5);
  EXPECT_GT(r1, r5);
}

TEST(RandomField, SampleFieldIsAffineInXi) {
  KernelSpec k;
  k.mean = 0.3;
  const auto b = kl_decompose(k, uniform_grid(0.0, 1.0, 100), 0.99);
  std::mt19937_64 rng(2);
  const Eigen::VectorXd a = oracle::gaussian(b.modes(), 1, rng), c = oracle::gaussian(b.modes(), 1, rng);
  EXPECT_EQ(sample_field(b, Eigen::VectorXd::Zero(b.modes())), b.mean_on_grid);
  EXPECT_LE((sample_field(b, a + c) - (sample_field(b, a) + sample_field(b, c) - b.mean_on_grid)).norm(), 1e-12);
  EXPECT_THROW(sample_field(b, Eigen::VectorXd::Zero(b.modes() + 1)), ShapeError);
}

TEST(RandomField, MonteCarloVarianceAtMidpoint) {
  const auto b = line_basis(0.2, 0.99, std::nullopt, 201);
  std::mt19937_64 rng(17);
  const Eigen::Index n = 100000;
  const Eigen::MatrixXd xi = oracle::gaussian(b.modes(), n, rng);
  const Eigen::Index mid = 100;
  Eigen::ArrayXd vals(n);
  for (Eigen::Index j = 0; j < n; ++j) vals(j) = sample_field(b, xi.col(j))(mid);
  const double var = (vals - vals.mean()).square().sum() / static_cast<double>(n - 1);
  double analytic = 0.0;
  for (Eigen::Index k = 0; k < b.modes(); ++k) analytic += b.eigenvalues(k) * std::pow(b.eigenfunctions(mid, k), 2);
  // Standard error of a Gaussian sample variance: var sqrt(2/(n-1)).
  EXPECT_LE(std::abs(var - analytic), 3.0 * analytic * std::sqrt(2.0 / (n - 1)));
  EXPECT_LE(std::abs(vals.mean()), 4.0 * std::sqrt(analytic / n));
}

TEST(RandomField, FieldAtReproducesGridAndInterpolates) {
  const auto b = line_basis(0.2, 0.99, 6, 200);
  std::mt19937_64 rng(5);
  const Eigen::VectorXd xi = oracle::gaussian(6, 1, rng);
  EXPECT_LE((field_at(b, xi, b.grid.points) - sample_field(b, xi)).cwiseAbs().maxCoeff(), 1e-10);

  // Oracle: 4x refined grid, same modes (sign convention aligns them).
  const auto fine = line_basis(0.2, 0.99, 6, 797);
  Eigen::MatrixXd p(1, 1);
  p << 0.3141;
  const double coarse_val = field_at(b, xi, p)(0);
  const double fine_val = field_at(fine, xi, p)(0);
  EXPECT_NEAR(coarse_val, fine_val, 1e-4);

  KernelSpec k;
  k.mean_fn = [](const Eigen::RowVectorXd& x) { return std::sin(x(0)); };
  const auto with_mean = kl_decompose(k, uniform_grid(0.0, 1.0, 50), 0.99);
  EXPECT_NEAR(field_at(with_mean, Eigen::VectorXd::Zero(with_mean.modes()), p)(0), std::sin(0.3141), 1e-15);

  Eigen::MatrixXd out(1, 1);
  out << 1.2;
  EXPECT_THROW(field_at(b, xi, out), DomainError);
}

TEST(RandomField, SeparableMatchesDense2D) {
  KernelSpec k;
  k.ell = 0.3;
  const auto g = uniform_grid(0.0, 1.0, 14);
  // Three modes: the constant-constant product plus the degenerate (1,0)/(0,1)
  // pair, so the truncated covariance is basis-independent.
  const auto dense = kl_decompose(k, tensor_quadrature(g, g), 0.99, 3);
  const auto sep = kl_decompose_separable(k, {g, g}, 0.99, 3);
  EXPECT_NEAR(dense.total_variance, sep.total_variance, 1e-10);
  EXPECT_LE((dense.eigenvalues - sep.eigenvalues).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::MatrixXd cd = dense.eigenfunctions * dense.eigenvalues.asDiagonal() * dense.eigenfunctions.transpose();
  const Eigen::MatrixXd cs = sep.eigenfunctions * sep.eigenvalues.asDiagonal() * sep.eigenfunctions.transpose();
  EXPECT_LE((cd - cs).cwiseAbs().maxCoeff(), 1e-8);

  std::mt19937_64 rng(8);
  const auto pts = oracle::uniform(10, 2, 0.0, 1.0, rng);
  const Eigen::MatrixXd md = kl_mode_values(dense, pts), ms = kl_mode_values(sep, pts);
  EXPECT_LE((md * md.transpose() - ms * ms.transpose()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((kl_mode_values(sep, sep.grid.points) -
             sep.eigenfunctions * sep.eigenvalues.cwiseSqrt().asDiagonal())
                .cwiseAbs()
                .maxCoeff(),
            1e-10);

  const auto dense_full = kl_decompose(k, tensor_quadrature(g, g), 0.999);
  const auto sep_full = kl_decompose_separable(k, {g, g}, 0.999);
  EXPECT_EQ(dense_full.modes(), sep_full.modes());
  EXPECT_LE((dense_full.eigenvalues - sep_full.eigenvalues).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(RandomField, TwoDimensionalCapture) {
  KernelSpec k;
  const auto g = uniform_grid(0.0, 1.0, 64);
  const auto b = kl_decompose_separable(k, {g, g}, 0.99);
  EXPECT_GE(b.captured_fraction, 0.99);
  const auto twenty = kl_decompose_separable(k, {g, g}, 0.99, 20);
  EXPECT_EQ(twenty.modes(), 20);
  EXPECT_LT(twenty.captured_fraction, 0.99);
  EXPECT_NEAR(b.total_variance, 1.0, 1e-3);
}

TEST(RandomField, InputFieldEvaluate) {
  KernelSpec k;
  auto basis = std::make_shared<const KLBasis>(kl_decompose(k, uniform_grid(0.0, 1.0, 60), 0.99, 3));
  const auto f = InputField::kl(basis, {1}, 2);
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd xi = oracle::gaussian(4, 6, rng);
  Eigen::MatrixXd pts = oracle::uniform(5, 2, 0.0, 1.0, rng);
  const auto vals = f.evaluate(pts, xi);
  for (Eigen::Index j = 0; j < 4; ++j) {
    const Eigen::VectorXd sub = xi.row(j).segment(2, 3).transpose();
    EXPECT_LE((vals.col(j) - field_at(*basis, sub, pts.col(1))).norm(), 1e-13);
  }
  const auto s = InputField::scaled_variable([](const Eigen::MatrixXd& p) { return Eigen::VectorXd(p.col(0) * 2.0); }, 5);
  const auto sv = s.evaluate(pts, xi);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_LE((sv.col(j) - 2.0 * xi(j, 5) * pts.col(0)).norm(), 1e-14);
  EXPECT_THROW(s.evaluate(pts, xi.leftCols(5)), ShapeError);
  EXPECT_EQ(InputField::constant(2.5).evaluate(pts, xi), Eigen::MatrixXd::Constant(5, 4, 2.5));
}
