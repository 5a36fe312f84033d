#include <filesystem>

#include <gtest/gtest.h>

#include "chaosop/config.hpp"

using namespace chaosop;

namespace {

// Line number reported for a bad config, or -1 if it parsed.
int error_line(const std::string& text, bool expensive = false) {
  try {
    parse_run_config(text, "t.yaml", expensive);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST(Config, ParsesAFullRunConfig) {
  const auto cfg = parse_run_config(R"(problem: burgers
mode: pc2_with_data
p: 2
q: 12
n_train: 20
points: {pde: 50, bc: 10}
solver: {space_intervals: 128, time_steps: 300}
fit: {max_iter: 7, grad_tol: 1.0e-6, data_weight: 0.5}
seed: 4
threads: 2
uq: true
sobol: false
out: results/b
)");
  EXPECT_EQ(cfg.problem, "burgers");
  EXPECT_EQ(cfg.mode, FitMode::Pc2WithData);
  EXPECT_EQ(cfg.p, 2);
  EXPECT_EQ(cfg.q, 12);
  EXPECT_EQ(cfg.n_train, 20u);
  EXPECT_EQ(cfg.points.pde, 50u);
  EXPECT_FALSE(cfg.points.ic);
  EXPECT_EQ(cfg.solver.space_intervals, 128);
  EXPECT_EQ(cfg.fit.max_iter, 7);
  EXPECT_DOUBLE_EQ(cfg.data_weight, 0.5);
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_EQ(cfg.threads, 2u);
  EXPECT_TRUE(cfg.uq);
  EXPECT_FALSE(cfg.sobol);
  EXPECT_EQ(cfg.out, "results/b");

  const FitOptions merged = cfg.fit.apply(FitOptions{});
  EXPECT_EQ(merged.max_iter, 7);
  EXPECT_DOUBLE_EQ(merged.grad_tol, 1e-6);
  EXPECT_DOUBLE_EQ(merged.damping, FitOptions{}.damping);
}

TEST(Config, ErrorsCarryTheLine) {
  EXPECT_EQ(error_line("problem: antiderivative\nq: 3\nbogus: 1\n"), 3);
  EXPECT_EQ(error_line("problem: heat3d\n"), 1);
  EXPECT_EQ(error_line("problem: antiderivative\nmode: fancy\n"), 2);
  EXPECT_EQ(error_line("problem: antiderivative\nn_train: 0\n"), 2);
  EXPECT_EQ(error_line("problem: antiderivative\nhyperbolic_q: 1.5\n"), 2);
  EXPECT_EQ(error_line("problem: antiderivative\nseed: -3\n"), 2);
  EXPECT_EQ(error_line("problem: antiderivative\nq: ten\n"), 2);
  EXPECT_EQ(error_line("problem: antiderivative\npoints:\n  pde: 10\n  edge: 3\n"), 4);
  EXPECT_EQ(error_line("problem: antiderivative\nfit: {grad_tol: 0}\n"), 2);
  EXPECT_GT(error_line("problem: [unclosed\n"), 0);  // the parser reports where input ended
  EXPECT_NE(error_line("q: 3\n"), -1);
  EXPECT_NE(error_line("- a\n- b\n"), -1);
}

TEST(Config, MessageNamesSourceAndKey) {
  try {
    parse_run_config("problem: antiderivative\nbogus: 1\n", "cfg.yaml");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_EQ(msg.rfind("cfg.yaml:2:", 0), 0u) << msg;
    EXPECT_NE(msg.find("bogus"), std::string::npos);
  }
}

TEST(Config, FullScaleNeedsExpensiveAndHeat) {
  EXPECT_EQ(error_line("problem: heat2d\nscale: full\n"), 2);
  EXPECT_EQ(error_line("problem: burgers\nscale: full\n", true), 2);
  const auto cfg = parse_run_config("problem: heat2d\nscale: full\n", "t", true);
  EXPECT_TRUE(cfg.full_scale);
  EXPECT_EQ(cfg.problem_id(), "heat2d_full");
}

TEST(Config, MissingFileIsAConfigError) {
  EXPECT_THROW(load_run_config("/nonexistent/run.yaml"), ConfigError);
  EXPECT_THROW(load_suite_config("/nonexistent/suite.yaml"), ConfigError);
}

TEST(Config, SuiteDefaultsAndEntries) {
  const auto all = parse_suite_config("{}");
  EXPECT_EQ(all.problems.size(), problem_names().size());
  EXPECT_EQ(all.modes.size(), 2u);
  EXPECT_TRUE(all.uq);

  const auto s = parse_suite_config("modes: [pc2]\nuq: false\nproblems:\n  - problem: antiderivative\n    q: 8\n");
  ASSERT_EQ(s.problems.size(), 1u);
  EXPECT_EQ(s.problems[0].q, 8);
  EXPECT_EQ(s.modes, std::vector<FitMode>{FitMode::Pc2});

  EXPECT_THROW(parse_suite_config("problems:\n  - problem: burgers\n  - problem: burgers\n"), ConfigError);
  EXPECT_THROW(parse_suite_config("problems:\n  - problem: burgers\n    mode: pc2\n"), ConfigError);
  EXPECT_THROW(parse_suite_config("modes: []\n"), ConfigError);
  EXPECT_THROW(parse_suite_config("extra: 1\n"), ConfigError);
}

TEST(Config, CheckedInConfigsParse) {
  std::size_t seen = 0;
  for (const auto& e : std::filesystem::directory_iterator(CONFIG_DIR)) {
    if (e.path().extension() != ".yaml") continue;
    ++seen;
    const auto name = e.path().filename().string();
    if (name.rfind("benchmark", 0) == 0)
      EXPECT_NO_THROW(load_suite_config(e.path())) << name;
    else
      EXPECT_NO_THROW(load_run_config(e.path(), true)) << name;
  }
  EXPECT_GE(seen, 8u);
}
