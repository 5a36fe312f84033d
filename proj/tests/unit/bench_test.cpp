#include <filesystem>

#include <gtest/gtest.h>

#include "chaosop/bench.hpp"

using namespace chaosop;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("chaosop_bench_" + name);
  fs::remove_all(d);
  return d;
}

// Small anti-derivative runs keep these tests fast.
RunConfig small_run(FitMode mode, const fs::path& out) {
  auto cfg = parse_run_config("problem: antiderivative\np: 2\nq: 6\nn_train: 30\nn_test: 40\nn_unlabeled: 60\n"
                              "n_mcs: 400\npoints: {pde: 200}\nseed: 3\n");
  cfg.mode = mode;
  cfg.out = out.string();
  return cfg;
}

}  // namespace

TEST(Bench, ResolveMergesOverridesOverDefaults) {
  auto cfg = parse_run_config("problem: burgers\nq: 9\nfit: {damping: 0.5}\n");
  const auto pb = problem_by_name("burgers");
  const auto r = resolve(cfg, pb);
  EXPECT_EQ(r.q, 9);
  EXPECT_EQ(r.p, pb.defaults.p);
  EXPECT_EQ(r.fit.max_iter, pb.defaults.fit.max_iter);
  EXPECT_DOUBLE_EQ(r.fit.damping, 0.5);
  EXPECT_EQ(r.mcs_seed(), r.seed + 4);
}

TEST(Bench, ReportMseIsMeanOfPerSampleErrors) {
  for (auto mode : {FitMode::DataDriven, FitMode::Pc2, FitMode::Pc2WithData}) {
    const auto out = run_fit(small_run(mode, fresh_dir("unused")));
    ASSERT_EQ(out.report.per_sample_mse.size(), 40);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < 40; ++j) sum += out.report.per_sample_mse(j);
    EXPECT_NEAR(out.report.mse, sum / 40.0, 1e-15 * sum) << to_string(mode);
    EXPECT_LT(out.report.mse, 1e-3) << to_string(mode);
    EXPECT_EQ(out.report.q_size, 7u);
    EXPECT_EQ(out.report.p_size, 28u);
  }
}

TEST(Bench, FitWritesItsFiles) {
  const auto dir = fresh_dir("fit");
  auto cfg = small_run(FitMode::Pc2, dir);
  cfg.uq = true;
  const auto out = cmd_fit(cfg);
  for (const char* f : {"model.chaosop", "report.json", "per_sample_errors.csv", "test_predictions.csv",
                        "uq_fields.csv", "sobol.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "gn_trace.csv"));

  const auto [h, errs] = read_numeric_csv(dir / "per_sample_errors.csv");
  ASSERT_EQ(errs.rows(), 40);
  EXPECT_EQ(h[1], "mse");
  EXPECT_EQ(h.back(), "xi5");
  EXPECT_NEAR(errs.col(1).mean(), out.report.mse, 1e-14 * out.report.mse);

  const auto [ph, preds] = read_numeric_csv(dir / "test_predictions.csv");
  EXPECT_EQ(ph, (std::vector<std::string>{"sample", "x", "reference", "prediction"}));
  EXPECT_EQ(preds.rows(), 5 * 101);

  const auto [sh, sob] = read_numeric_csv(dir / "sobol.csv");
  EXPECT_EQ(sh.size(), 1u + 6u + 1u);
  for (Eigen::Index i = 0; i < sob.rows(); ++i)
    if (sob(i, 7) == 0.0) {
      EXPECT_NEAR(sob.row(i).segment(1, 6).sum(), 1.0, 1e-10);
    }

  const auto model = load_model(dir / "model.chaosop");
  EXPECT_EQ(model.meta.problem, "antiderivative");
  EXPECT_EQ(model.coefficients.values, out.model.coefficients.values);
  fs::remove_all(dir);
}

TEST(Bench, UqCommandMatchesFitAndChecksCompatibility) {
  const auto dir = fresh_dir("uq");
  auto cfg = small_run(FitMode::DataDriven, dir);
  cfg.uq = true;
  const auto fit = cmd_fit(cfg);
  cfg.out = (dir / "uq").string();
  const auto errs = cmd_uq(dir / "model.chaosop", cfg);
  EXPECT_DOUBLE_EQ(errs.mean_mae, fit.report.uq->mean_mae);
  EXPECT_DOUBLE_EQ(errs.std_mae, fit.report.uq->std_mae);
  EXPECT_TRUE(fs::exists(dir / "uq" / "uq_summary.json"));

  auto other = cfg;
  other.q = 7;
  EXPECT_THROW(cmd_uq(dir / "model.chaosop", other), ModelIncompatibleError);
  auto wrong = parse_run_config("problem: burgers\n");
  EXPECT_THROW(cmd_uq(dir / "model.chaosop", wrong), ModelIncompatibleError);
  fs::remove_all(dir);
}

TEST(Bench, MeanOnlyModelHasZeroStd) {
  auto out = run_fit(small_run(FitMode::DataDriven, fresh_dir("unused")));
  auto& c = out.model.coefficients;
  c.values.rightCols(c.values.cols() - 1).setZero();
  const auto s = summarize(c, problem_antiderivative().uq_points(), false, true);
  EXPECT_TRUE(s.std.isZero(0.0));
  for (bool d : s.degenerate) EXPECT_TRUE(d);
}

TEST(Bench, RunsAreDeterministic) {
  auto cfg = small_run(FitMode::Pc2WithData, fresh_dir("unused"));
  const auto a = run_fit(cfg);
  cfg.threads = 3;
  const auto b = run_fit(cfg);
  EXPECT_EQ(a.report.mse, b.report.mse);
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
}

TEST(Bench, SuiteRestrictedToOneProblem) {
  const auto dir = fresh_dir("suite");
  auto suite = parse_suite_config("uq: false\nproblems:\n  - problem: antiderivative\n    p: 2\n    q: 6\n"
                                  "    n_test: 30\n    n_unlabeled: 60\n    points: {pde: 200}\n");
  suite.out = dir.string();
  const auto result = cmd_benchmark(suite);
  ASSERT_EQ(result.rows.size(), 2u);
  EXPECT_TRUE(result.all_ok());
  EXPECT_EQ(result.rows[0].mode, "data_driven");
  EXPECT_EQ(result.rows[1].mode, "pc2");
  const auto text = read_file(dir / "benchmark.csv");
  EXPECT_EQ(text.rfind("problem,mode,status,mse,mean_mae,std_mae,fit_seconds,total_seconds\n", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "benchmark.json"));
  fs::remove_all(dir);
}

TEST(Bench, FailingRowIsRecorded) {
  // Fewer unlabeled samples than stochastic basis terms cannot be fitted.
  auto suite = parse_suite_config("modes: [pc2]\nuq: false\nproblems:\n  - problem: antiderivative\n"
                                  "    n_unlabeled: 5\n    n_test: 10\n");
  const auto result = run_benchmark(suite);
  ASSERT_EQ(result.rows.size(), 1u);
  EXPECT_FALSE(result.rows[0].ok);
  EXPECT_FALSE(result.rows[0].message.empty());
}
