#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "chaosop/uq_post.hpp"
#include "oracles.hpp"

using namespace chaosop;
using oracle::gaussian;

namespace {

CoefficientMatrix random_surrogate(std::uint64_t seed, std::size_t r = 3, int p = 2) {
  std::mt19937_64 rng(seed);
  const auto set_a = total_degree_set(r, p), set_b = total_degree_set(2, 3);
  return {gaussian(static_cast<Eigen::Index>(set_b.size()), static_cast<Eigen::Index>(set_a.size()), rng), set_a,
          set_b, DomainMap({0.0, 0.0}, {1.0, 1.0})};
}

Eigen::MatrixXd some_points(std::uint64_t seed, Eigen::Index n) {
  std::mt19937_64 rng(seed);
  return oracle::uniform(n, 2, 0.0, 1.0, rng);
}

}  // namespace

TEST(UqPost, ZeroAndDeterministicSurrogates) {
  auto c = random_surrogate(1);
  const auto pts = some_points(2, 6);
  CoefficientMatrix zero(Eigen::MatrixXd::Zero(c.values.rows(), c.values.cols()), c.set_a, c.set_b, c.map);
  EXPECT_TRUE(predictive_mean(zero, pts).isZero(0.0));

  CoefficientMatrix det = c;
  det.values.rightCols(det.values.cols() - 1).setZero();
  std::mt19937_64 rng(3);
  const auto pred = predict(det, pts, gaussian(7, 3, rng));
  const auto mean = predictive_mean(det, pts);
  for (Eigen::Index j = 0; j < 7; ++j) EXPECT_LE((pred.col(j) - mean).norm(), 1e-13 * mean.norm());
  EXPECT_TRUE(predictive_covariance(det, pts).isZero(0.0));
  const auto sob = sobol_first_order(det, pts);
  for (bool d : sob.degenerate) EXPECT_TRUE(d);
  EXPECT_TRUE(sob.indices.isZero(0.0));
}

TEST(UqPost, SingleEntryVariance) {
  auto c = random_surrogate(4);
  c.values.setZero();
  c.values(2, 5) = 1.7;  // beta = (0,1), alpha = a nonconstant stochastic index
  Eigen::MatrixXd pt(1, 2);
  pt << 0.3, 0.8;
  const double phi_b = assemble_phi(c.set_b, pt, c.map).shared_matrix()(0, 2);
  EXPECT_NEAR(predictive_covariance(c, pt)(0, 0), 1.7 * 1.7 * phi_b * phi_b, 1e-14);
  EXPECT_NEAR(predictive_std(c, pt)(0), 1.7 * std::abs(phi_b), 1e-14);
}

TEST(UqPost, CovarianceInvariants) {
  const auto c = random_surrogate(5);
  const auto pts = some_points(6, 12);
  const auto cov = predictive_covariance(c, pts);
  EXPECT_EQ(cov, cov.transpose());
  const double tr = cov.trace();
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().minCoeff(), -1e-10 * tr);
  const auto sd = predictive_std(c, pts);
  for (Eigen::Index i = 0; i < 12; ++i) EXPECT_NEAR(sd(i), std::sqrt(cov(i, i)), 1e-12 * sd(i));

  CoefficientMatrix flipped = c;
  flipped.values.col(3) *= -1.0;
  flipped.values.col(7) *= -1.0;
  EXPECT_LE((predictive_covariance(flipped, pts).diagonal() - cov.diagonal()).norm(), 1e-12 * cov.diagonal().norm());

  const auto summary = summarize(c, pts, true, true);
  ASSERT_TRUE(summary.covariance && summary.sobol_first);
  for (Eigen::Index i = 0; i < 12; ++i) EXPECT_NEAR(summary.std(i), std::sqrt(cov(i, i)), 1e-12 * summary.std(i));
  for (Eigen::Index i = 0; i < 12; ++i) EXPECT_LE(summary.sobol_first->row(i).sum(), 1.0 + 1e-9);
}

TEST(UqPost, MomentsMatchSurrogateMonteCarlo) {
  const auto c = random_surrogate(7);
  const auto pts = some_points(8, 5);
  std::mt19937_64 rng(9);
  const Eigen::Index n = 100000;
  const auto s = predict(c, pts, gaussian(n, 3, rng));
  const Eigen::VectorXd mc_mean = s.rowwise().mean();
  const Eigen::MatrixXd centred = s.colwise() - mc_mean;
  const Eigen::MatrixXd mc_cov = centred * centred.transpose() / static_cast<double>(n - 1);
  const auto mean = predictive_mean(c, pts);
  const auto cov = predictive_covariance(c, pts);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const double se = std::sqrt(mc_cov(i, i) / n);
    EXPECT_LE(std::abs(mean(i) - mc_mean(i)), 4.0 * se) << i;
    // Standard error of each covariance entry estimated from the sample itself.
    for (Eigen::Index k = 0; k < 5; ++k) {
      const Eigen::ArrayXd prod = centred.row(i).array() * centred.row(k).array();
      const double se_cov = std::sqrt((prod - prod.mean()).square().mean() / n);
      EXPECT_LE(std::abs(cov(i, k) - mc_cov(i, k)), 4.0 * se_cov) << i << " " << k;
    }
  }
}

TEST(UqPost, SobolAnalyticCases) {
  auto c = random_surrogate(10, 2, 2);
  // Depends on xi_1 only: zero every index with xi_2 active.
  for (std::size_t a = 0; a < c.set_a.size(); ++a)
    if (c.set_a[a][1] != 0) c.values.col(static_cast<Eigen::Index>(a)).setZero();
  const auto pts = some_points(11, 4);
  const auto s1 = sobol_first_order(c, pts);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(s1.indices(i, 0), 1.0, 1e-12);
    EXPECT_NEAR(s1.indices(i, 1), 0.0, 1e-12);
  }

  // a He1(xi_1) + b He1(xi_2) with constant spatial part.
  CoefficientMatrix add(Eigen::MatrixXd::Zero(c.values.rows(), c.values.cols()), c.set_a, c.set_b, c.map);
  add.values(0, 1) = 2.0;
  add.values(0, 2) = 3.0;
  const auto s2 = sobol_first_order(add, pts);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(s2.indices(i, 0), 4.0 / 13.0, 1e-12);

  CoefficientMatrix scaled = random_surrogate(12);
  const auto base = sobol_first_order(scaled, pts).indices;
  scaled.values *= -3.5;
  EXPECT_LE((sobol_first_order(scaled, pts).indices - base).cwiseAbs().maxCoeff(), 1e-12);
}

// Pick-freeze (Saltelli) estimator: S_i ~ mean(f(A) (f(B_A^i) - f(B))) / Var f,
// where B_A^i takes column i from A and the rest from B.
TEST(UqPost, SobolMatchesPickFreezeMonteCarlo) {
  const auto c = random_surrogate(13);
  const auto pts = some_points(14, 3);
  std::mt19937_64 rng(15);
  const Eigen::Index n = 100000;
  const auto a = gaussian(n, 3, rng), b = gaussian(n, 3, rng);
  const auto fa = predict(c, pts, a), fb = predict(c, pts, b);
  const auto analytic = sobol_first_order(c, pts).indices;
  for (Eigen::Index i = 0; i < 3; ++i) {
    Eigen::MatrixXd mixed = b;
    mixed.col(i) = a.col(i);
    const auto fm = predict(c, pts, mixed);
    for (Eigen::Index p = 0; p < 3; ++p) {
      const Eigen::ArrayXd ya = fa.row(p).array(), yb = fb.row(p).array(), ym = fm.row(p).array();
      const double var = 0.5 * ((ya - ya.mean()).square().mean() + (yb - yb.mean()).square().mean());
      const double est = (ya * (ym - yb)).mean() / var;
      EXPECT_NEAR(est, analytic(p, i), 0.02) << p << " " << i;
    }
  }
}
