#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "chaosop/pde_suite.hpp"

namespace {

using namespace chaosop;

TEST(PdeSuite, ProblemShapes) {
  EXPECT_EQ(problem_antiderivative().r, 6u);
  EXPECT_EQ(problem_advection_diffusion().r, 6u);
  EXPECT_EQ(problem_burgers().r, 6u);
  const auto heat = problem_heat2d();
  EXPECT_EQ(heat.r, 21u);
  EXPECT_EQ(heat.stochastic_set(4, 0.9).size(), 2045u);
  EXPECT_EQ(heat.spatial_set(16).size(), 969u);
  EXPECT_EQ(heat.query_points().rows(), 17 * 17 * 21);
  EXPECT_EQ(heat.uq_points().rows(), 17 * 17);
  EXPECT_EQ(problem_burgers().spatial_set(23).size(), 300u);
  EXPECT_EQ(problem_advection_diffusion().spatial_set(14).size(), 120u);
  EXPECT_THROW(problem_by_name("nope"), ParameterError);
}

TEST(PdeSuite, DrawXiIsSeededAndSampleMajor) {
  const auto a = draw_xi(5, 3, 7), b = draw_xi(8, 3, 7);
  EXPECT_EQ(a, b.topRows(5));
  EXPECT_NE(a, draw_xi(5, 3, 8));
}

TEST(PdeSuite, DatasetIsIndependentOfThreadCount) {
  const auto pb = problem_advection_diffusion();
  Eigen::MatrixXd pts(3, 2);
  pts << 0.5, 0.0, 0.3, 0.5, 0.7, 1.0;
  const auto one = generate_dataset(pb, 6, pts, 5, 1);
  const auto many = generate_dataset(pb, 6, pts, 5, 3);
  EXPECT_EQ(one.solutions, many.solutions);
  EXPECT_EQ(one.xi, draw_xi(6, 6, 5));
  EXPECT_EQ(one.inputs.rows(), 101);
  EXPECT_EQ(one.provenance.seed, 5u);
  for (Eigen::Index j = 0; j < 6; ++j) EXPECT_NEAR(one.solutions(0, j), 1.0, 1e-12);
}

TEST(PdeSuite, AntiderivativeDatasetMatchesTheIntegratedField) {
  const auto pb = problem_antiderivative();
  const Eigen::MatrixXd pts = pb.query_points();
  const auto ds = generate_dataset(pb, 3, pts, 2);
  // Trapezoid on the 101 recorded input values approximates the 1001-node solve.
  for (Eigen::Index j = 0; j < 3; ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 1; i < 101; ++i) {
      acc += 0.005 * (ds.inputs(i - 1, j) + ds.inputs(i, j));
      EXPECT_NEAR(ds.solutions(i, j), acc, 2e-3);
    }
    EXPECT_EQ(ds.solutions(0, j), 0.0);
  }
}

TEST(PdeSuite, HeatDatasetCarriesTheRandomAmplitude) {
  const auto pb = problem_heat2d();
  Eigen::MatrixXd pts(1, 3);
  pts << 0.25, 0.25, 0.0;
  const auto ds = generate_dataset(pb, 4, pts, 9);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(ds.solutions(0, j), ds.xi(j, 20), 1e-12);
}

TEST(PdeSuite, SolverFailureNamesTheSample) {
  auto pb = problem_antiderivative();
  pb.solve = [](const Eigen::VectorXd& xi) -> GridSolution {
    if (xi(0) > 0) throw SolverError("blew up");
    GridSolution g;
    g.axes = {uniform_axis(0, 1, 1)};
    g.values = Eigen::VectorXd::Zero(2);
    return g;
  };
  Eigen::MatrixXd xi = Eigen::MatrixXd::Constant(3, 6, -1.0);
  xi(1, 0) = 0.5;
  try {
    generate_dataset_for(pb, xi, Eigen::MatrixXd::Zero(1, 1), 0, 2);
    FAIL();
  } catch (const SolverError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("sample 1"), std::string::npos);
    EXPECT_NE(msg.find("0.5"), std::string::npos);
  }
  EXPECT_THROW(generate_dataset(pb, 0, Eigen::MatrixXd::Zero(1, 1), 0), ParameterError);
}

TEST(PdeSuite, McsStatisticsMatchDirectMoments) {
  const auto pb = problem_antiderivative();
  Eigen::MatrixXd pts(2, 1);
  pts << 0.5, 1.0;
  const auto xi = draw_xi(300, 6, 4);
  const auto ds = generate_dataset_for(pb, xi, pts);
  const auto ref = mcs_statistics_for(pb, xi, pts, 2);
  for (Eigen::Index i = 0; i < 2; ++i) {
    const Eigen::VectorXd row = ds.solutions.row(i).transpose();
    const double mean = row.mean();
    const double var = (row.array() - mean).square().sum() / 299.0;
    EXPECT_NEAR(ref.mean(i), mean, 1e-13);
    EXPECT_NEAR(ref.std(i), std::sqrt(var), 1e-12);
  }
  EXPECT_EQ(ref.samples, 300u);
}

TEST(PdeSuite, Pc2SystemHasOneBlockPerActiveConstraint) {
  const auto pb = problem_antiderivative();
  const auto set_b = pb.spatial_set(10), set_a = pb.stochastic_set(3, 1.0);
  const auto xi = draw_xi(50, 6, 1);
  const auto sys = assemble_pc2_system(pb, set_b, set_a, xi, pb.defaults.points, 3);
  EXPECT_EQ(sys.blocks.size(), 2u);
  EXPECT_EQ(sys.q(), 11);
  EXPECT_EQ(sys.p(), 84);
  EXPECT_FALSE(sys.nonlinear());

  const auto burgers = problem_burgers();
  const auto bsys = assemble_pc2_system(burgers, burgers.spatial_set(5), burgers.stochastic_set(1, 1.0), xi,
                                        {30, 10, 10}, 3);
  EXPECT_EQ(bsys.blocks.size(), 3u);
  EXPECT_TRUE(bsys.nonlinear());
}

// The PC2 surrogate of the antiderivative reproduces the reference solver.
TEST(PdeSuite, AntiderivativePc2AgreesWithTheReferenceSolver) {
  const auto pb = problem_antiderivative();
  const auto set_b = pb.spatial_set(10), set_a = pb.stochastic_set(3, 1.0);
  const auto sys = assemble_pc2_system(pb, set_b, set_a, draw_xi(500, 6, 1), pb.defaults.points, 3);
  const CoefficientMatrix c{fit_pc2_linear(sys), set_a, set_b, pb.domain_map()};
  const auto test = generate_dataset(pb, 50, pb.query_points(), 2);
  const Eigen::MatrixXd pred = predict(c, test.points, test.xi);
  EXPECT_LT((pred - test.solutions).squaredNorm() / static_cast<double>(pred.size()), 1e-6);
}

TEST(PdeSuite, ZeroGermGivesZeroAntiderivative) {
  const auto pb = problem_antiderivative();
  const auto ds = generate_dataset_for(pb, Eigen::MatrixXd::Zero(1, 6), pb.query_points());
  EXPECT_EQ(ds.solutions.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(ds.inputs.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PdeSuite, FirstModeAgreesWithAFourTimesRefinedIntegration) {
  const auto pb = problem_antiderivative();
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(1, 6);
  xi(0, 0) = 1.0;
  const auto ds = generate_dataset_for(pb, xi, pb.query_points());
  const Eigen::VectorXd x = uniform_axis(0, 1, 4000);
  const auto fine = solve_antiderivative(x, pb.input.evaluate_one(x, xi.row(0).transpose()));
  EXPECT_LT((ds.solutions.col(0) - fine.interpolate(pb.query_points())).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PdeSuite, IdenticalSamplesHaveZeroSpread) {
  const auto pb = problem_antiderivative();
  const Eigen::MatrixXd xi = draw_xi(1, 6, 3).replicate(2, 1);
  const auto ref = mcs_statistics_for(pb, xi, pb.query_points());
  EXPECT_EQ(ref.std.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(mcs_statistics(pb, 1, pb.query_points(), 0), ParameterError);
}

TEST(PdeSuite, DoublingTheSampleMovesTheMeanByMonteCarloNoiseOnly) {
  const auto pb = problem_antiderivative();
  const Eigen::MatrixXd pts = pb.query_points();
  const std::size_t m = 2000;
  const auto a = mcs_statistics(pb, m, pts, 100);
  const auto b = mcs_statistics(pb, m, pts, 200);
  const Eigen::MatrixXd both = (Eigen::MatrixXd(2 * m, 6) << draw_xi(m, 6, 100), draw_xi(m, 6, 200)).finished();
  const auto pooled = mcs_statistics_for(pb, both, pts);
  const double bound = 5 * pooled.std.maxCoeff() / std::sqrt(static_cast<double>(m));
  EXPECT_LE((pooled.mean - a.mean).cwiseAbs().maxCoeff(), bound);
  EXPECT_LE((pooled.mean - b.mean).cwiseAbs().maxCoeff(), bound);
}

TEST(PdeSuite, ReferenceSolutionsVanishOnDirichletBoundaries) {
  const auto pb = problem_advection_diffusion();
  const auto xi = draw_xi(1, 6, 4);
  const auto g = pb.solve(xi.row(0).transpose());
  const Eigen::Index m = g.axes[0].size() - 1;
  for (Eigen::Index n = 0; n < g.axes[1].size(); ++n) {
    EXPECT_LE(std::abs(g.values(g.flat({0, n}))), 1e-12);
    EXPECT_LE(std::abs(g.values(g.flat({m, n}))), 1e-12);
  }
}

}  // namespace
