#pragma once

// Pipelines behind the command-line tool: generate data, fit, evaluate on a
// held-out set, compare moments against Monte Carlo, persist everything.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "chaosop/config.hpp"
#include "chaosop/csv.hpp"
#include "chaosop/model_io.hpp"
#include "chaosop/operator_fit.hpp"
#include "chaosop/pde_suite.hpp"
#include "chaosop/uq_post.hpp"

namespace chaosop {

struct ResolvedParams {
  int p = 0;
  int q = 0;
  double hyperbolic_q = 1.0;
  std::size_t n_train = 0, n_test = 0, n_unlabeled = 0, n_mcs = 0;
  PointCounts points;
  std::uint64_t seed = 0;
  FitOptions fit;

  // Derived seeds, one stream per purpose.
  std::uint64_t train_seed() const { return seed; }
  std::uint64_t test_seed() const { return seed + 1; }
  std::uint64_t unlabeled_seed() const { return seed + 2; }
  std::uint64_t points_seed() const { return seed + 3; }
  std::uint64_t mcs_seed() const { return seed + 4; }
};

inline ResolvedParams resolve(const RunConfig& cfg, const PdeProblem& pb) {
  const auto& d = pb.defaults;
  ResolvedParams r;
  r.p = cfg.p.value_or(d.p);
  r.q = cfg.q.value_or(d.q);
  r.hyperbolic_q = cfg.hyperbolic_q.value_or(d.hyperbolic_q);
  r.n_train = cfg.n_train.value_or(d.n_train);
  r.n_test = cfg.n_test.value_or(d.n_test);
  r.n_unlabeled = cfg.n_unlabeled.value_or(d.n_unlabeled);
  r.n_mcs = cfg.n_mcs.value_or(d.n_mcs);
  r.points = {cfg.points.pde.value_or(d.points.pde), cfg.points.bc.value_or(d.points.bc),
              cfg.points.ic.value_or(d.points.ic)};
  r.seed = cfg.seed.value_or(d.seed);
  r.fit = cfg.fit.apply(d.fit);
  return r;
}

inline std::vector<KlRecord> kl_records(const PdeProblem& pb) {
  std::vector<KlRecord> out;
  for (const auto& k : pb.kl)
    out.push_back({k.name, k.offset, k.basis->kernel.sigma, k.basis->kernel.ell, k.basis->kernel.mean,
                   k.basis->captured_fraction, k.basis->eigenvalues});
  return out;
}

struct Timings {
  double data = 0, assemble = 0, fit = 0, evaluate = 0, uq = 0;
};

struct UqErrors {
  double mean_mae = 0.0;
  double std_mae = 0.0;
  std::size_t mcs_samples = 0;
};

struct FitReport {
  std::string problem;
  std::string mode;
  ResolvedParams params;
  std::size_t q_size = 0, p_size = 0;
  double mse = 0.0;
  Eigen::VectorXd per_sample_mse;
  std::optional<UqErrors> uq;
  Timings timings;
  std::vector<GaussNewtonStep> trace;
  bool converged = true;
  std::string solver, solver_grid;
  std::vector<KlRecord> kl;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["problem"] = problem;
    j["mode"] = mode;
    j["library_version"] = kLibraryVersion;
    j["config"] = {{"p", params.p},
                   {"q", params.q},
                   {"hyperbolic_q", params.hyperbolic_q},
                   {"n_train", params.n_train},
                   {"n_test", params.n_test},
                   {"n_unlabeled", params.n_unlabeled},
                   {"n_mcs", params.n_mcs},
                   {"points", {{"pde", params.points.pde}, {"bc", params.points.bc}, {"ic", params.points.ic}}},
                   {"seed", params.seed},
                   {"fit",
                    {{"ridge", params.fit.ridge},
                     {"max_iter", params.fit.max_iter},
                     {"grad_tol", params.fit.grad_tol},
                     {"damping", params.fit.damping},
                     {"cg_tol", params.fit.cg_tol}}}};
    j["basis"] = {{"Q", q_size}, {"P", p_size}};
    j["reference_solver"] = {{"id", solver}, {"grid", solver_grid}};
    for (const auto& k : kl)
      j["kl"].push_back({{"field", k.name}, {"modes", k.eigenvalues.size()}, {"captured_fraction", k.captured_fraction}});
    j["mse"] = mse;
    if (uq) j["uq"] = {{"mean_mae", uq->mean_mae}, {"std_mae", uq->std_mae}, {"mcs_samples", uq->mcs_samples}};
    if (!trace.empty()) {
      j["gauss_newton"] = {{"converged", converged},
                           {"steps", trace.size()},
                           {"final_loss", trace.back().loss},
                           {"final_grad_norm", trace.back().grad_norm}};
    }
    j["timings_s"] = {{"data", timings.data},
                      {"assemble", timings.assemble},
                      {"fit", timings.fit},
                      {"evaluate", timings.evaluate},
                      {"uq", timings.uq}};
    return j;
  }
};

struct FitOutcome {
  SavedModel model;
  FitReport report;
  Eigen::MatrixXd test_predictions;  // n x N_test
};

/// Per-problem state shared by several fits: the problem, its held-out set
/// and the Monte Carlo reference, each built on first use.
class ProblemContext {
 public:
  explicit ProblemContext(const RunConfig& cfg) : problem_(problem_by_name(cfg.problem_id(), cfg.solver)) {
    params_ = resolve(cfg, problem_);
    threads_ = cfg.threads;
  }

  const PdeProblem& problem() const { return problem_; }
  const ResolvedParams& params() const { return params_; }
  unsigned threads() const { return threads_; }

  const Dataset& test_set(double* seconds = nullptr) {
    if (!test_) {
      const auto t0 = std::chrono::steady_clock::now();
      test_ = generate_dataset(problem_, params_.n_test, problem_.query_points(), params_.test_seed(), threads_);
      if (seconds) *seconds += elapsed(t0);
    }
    return *test_;
  }

  const McsReference& mcs(double* seconds = nullptr) {
    if (!mcs_) {
      const auto t0 = std::chrono::steady_clock::now();
      mcs_ = mcs_statistics(problem_, params_.n_mcs, problem_.uq_points(), params_.mcs_seed(), threads_);
      if (seconds) *seconds += elapsed(t0);
    }
    return *mcs_;
  }

  static double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

 private:
  PdeProblem problem_;
  ResolvedParams params_;
  unsigned threads_ = 1;
  std::optional<Dataset> test_;
  std::optional<McsReference> mcs_;
};

inline UqErrors uq_errors(const UQSummary& s, const McsReference& ref) {
  return {(s.mean - ref.mean).cwiseAbs().mean(), (s.std - ref.std).cwiseAbs().mean(), ref.samples};
}

/// Generate, assemble, fit and evaluate one configuration (no files written).
inline FitOutcome run_fit(const RunConfig& cfg, ProblemContext& ctx) {
  using clock = std::chrono::steady_clock;
  const auto& pb = ctx.problem();
  const auto& prm = ctx.params();
  FitOutcome out;
  auto& rep = out.report;
  rep.problem = ctx.problem().name;
  rep.mode = to_string(cfg.mode);
  rep.params = prm;
  rep.solver = pb.solver_id;
  rep.solver_grid = pb.solver_grid;
  rep.kl = kl_records(pb);

  const auto set_b = pb.spatial_set(prm.q);
  const auto set_a = pb.stochastic_set(prm.p, prm.hyperbolic_q);
  rep.q_size = set_b.size();
  rep.p_size = set_a.size();
  const DomainMap map = pb.domain_map();
  const Eigen::MatrixXd query = pb.query_points();

  std::optional<Dataset> train;
  if (cfg.mode != FitMode::Pc2) {
    const auto t0 = clock::now();
    train = generate_dataset(pb, prm.n_train, query, prm.train_seed(), ctx.threads());
    rep.timings.data += ProblemContext::elapsed(t0);
  }

  Eigen::MatrixXd c;
  if (cfg.mode == FitMode::DataDriven) {
    auto t0 = clock::now();
    const Eigen::MatrixXd phi = assemble_phi(set_b, query, map).shared_matrix();
    const Eigen::MatrixXd psi = assemble_psi(set_a, train->xi);
    rep.timings.assemble = ProblemContext::elapsed(t0);
    t0 = clock::now();
    c = fit_data_driven(phi, psi, train->solutions, prm.fit);
    rep.timings.fit = ProblemContext::elapsed(t0);
  } else {
    auto t0 = clock::now();
    const Eigen::MatrixXd xi = train ? train->xi : draw_xi(prm.n_unlabeled, pb.r, prm.unlabeled_seed());
    Pc2System sys = assemble_pc2_system(pb, set_b, set_a, xi, prm.points, prm.points_seed());
    if (train)
      sys = augment_with_data(std::move(sys), assemble_phi(set_b, query, map).shared_matrix(), train->solutions,
                              cfg.data_weight);
    rep.timings.assemble = ProblemContext::elapsed(t0);
    t0 = clock::now();
    if (sys.nonlinear()) {
      auto nf = fit_pc2_nonlinear(sys, std::nullopt, prm.fit);
      c = std::move(nf.coefficients);
      rep.trace = std::move(nf.trace);
      rep.converged = nf.converged;
    } else {
      c = fit_pc2_linear(sys, prm.fit);
    }
    rep.timings.fit = ProblemContext::elapsed(t0);
  }

  out.model.coefficients = CoefficientMatrix(std::move(c), set_a, set_b, map);
  out.model.meta.problem = pb.name;
  out.model.meta.mode = rep.mode;
  out.model.meta.seed = prm.seed;
  for (const auto& a : pb.box.axes) out.model.meta.axis_names.push_back(a.name);
  out.model.kl = rep.kl;

  const Dataset& test = ctx.test_set(&rep.timings.data);
  auto t0 = clock::now();
  out.test_predictions = predict(out.model.coefficients, test.points, test.xi);
  rep.per_sample_mse = (out.test_predictions - test.solutions).colwise().squaredNorm().transpose() /
                       static_cast<double>(test.points.rows());
  rep.mse = rep.per_sample_mse.mean();
  rep.timings.evaluate = ProblemContext::elapsed(t0);

  if (cfg.uq) {
    t0 = clock::now();
    const auto summary = summarize(out.model.coefficients, pb.uq_points(), false, false);
    rep.uq = uq_errors(summary, ctx.mcs());
    rep.timings.uq = ProblemContext::elapsed(t0);
  }
  return out;
}

inline FitOutcome run_fit(const RunConfig& cfg) {
  ProblemContext ctx(cfg);
  return run_fit(cfg, ctx);
}

namespace detail {

inline std::vector<std::string> axis_columns(const PdeProblem& pb) {
  std::vector<std::string> cols;
  for (const auto& a : pb.box.axes) cols.push_back(a.name);
  return cols;
}

inline std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Mean/std fields against the Monte Carlo reference, and first-order Sobol indices.
inline void write_uq_files(const std::filesystem::path& dir, const PdeProblem& pb, const UQSummary& s,
                           const McsReference& ref) {
  CsvTable fields(concat(axis_columns(pb), {"mean", "std", "mcs_mean", "mcs_std", "abs_err_mean", "abs_err_std"}));
  for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
    Eigen::RowVectorXd row(s.points.cols() + 6);
    row << s.points.row(i), s.mean(i), s.std(i), ref.mean(i), ref.std(i), std::abs(s.mean(i) - ref.mean(i)),
        std::abs(s.std(i) - ref.std(i));
    fields.add_row(row);
  }
  fields.write(dir / "uq_fields.csv");
  if (s.sobol_first) {
    const auto& sob = *s.sobol_first;
    CsvTable table(concat(concat(axis_columns(pb), numbered("S_xi", sob.cols())), {"degenerate"}));
    for (Eigen::Index i = 0; i < sob.rows(); ++i) {
      Eigen::RowVectorXd row(s.points.cols() + sob.cols() + 1);
      row << s.points.row(i), sob.row(i), s.degenerate[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
      table.add_row(row);
    }
    table.write(dir / "sobol.csv");
  }
}

}  // namespace detail

/// Writes model.chaosop, report.json, per_sample_errors.csv,
/// test_predictions.csv and, when applicable, gn_trace.csv and UQ files.
inline FitOutcome cmd_fit(const RunConfig& cfg) {
  ProblemContext ctx(cfg);
  auto out = run_fit(cfg, ctx);
  const std::filesystem::path dir = cfg.out;
  const auto& pb = ctx.problem();
  const auto& test = ctx.test_set();

  save_model(dir / "model.chaosop", out.model);
  atomic_write(dir / "report.json", detail::json_text(out.report.to_json()));

  CsvTable errs(concat({"sample", "mse"}, numbered("xi", test.xi.cols())));
  for (Eigen::Index j = 0; j < test.xi.rows(); ++j) {
    Eigen::RowVectorXd row(2 + test.xi.cols());
    row << static_cast<double>(j), out.report.per_sample_mse(j), test.xi.row(j);
    errs.add_row(row);
  }
  errs.write(dir / "per_sample_errors.csv");

  CsvTable preds(concat(concat({"sample"}, detail::axis_columns(pb)), {"reference", "prediction"}));
  const Eigen::Index shown = std::min<Eigen::Index>(5, test.xi.rows());
  for (Eigen::Index j = 0; j < shown; ++j)
    for (Eigen::Index i = 0; i < test.points.rows(); ++i) {
      Eigen::RowVectorXd row(3 + test.points.cols());
      row << static_cast<double>(j), test.points.row(i), test.solutions(i, j), out.test_predictions(i, j);
      preds.add_row(row);
    }
  preds.write(dir / "test_predictions.csv");

  if (!out.report.trace.empty()) {
    CsvTable trace({"iter", "loss", "grad_norm", "damping", "accepted", "cg_iterations"});
    for (const auto& s : out.report.trace)
      trace.add_row({std::to_string(s.iter), format_double(s.loss), format_double(s.grad_norm),
                     format_double(s.damping), s.accepted ? "1" : "0", std::to_string(s.cg_iterations)});
    trace.write(dir / "gn_trace.csv");
  }
  if (cfg.uq) {
    const auto summary = summarize(out.model.coefficients, pb.uq_points(), false, cfg.sobol);
    detail::write_uq_files(dir, pb, summary, ctx.mcs());
  }
  return out;
}

/// Loads a model, checks it against the configured problem and writes the
/// UQ fields, Sobol indices and uq_summary.json.
inline UqErrors cmd_uq(const std::filesystem::path& model_path, const RunConfig& cfg) {
  const auto model = load_model(model_path);
  ProblemContext ctx(cfg);
  const auto& pb = ctx.problem();
  const auto& prm = ctx.params();
  if (model.meta.problem != pb.name)
    throw ModelIncompatibleError("model was fitted for '" + model.meta.problem + "', config names '" + pb.name + "'");
  check_compatible(model, pb.stochastic_set(prm.p, prm.hyperbolic_q), pb.spatial_set(prm.q), pb.domain_map(),
                   kl_records(pb));
  const auto summary = summarize(model.coefficients, pb.uq_points(), false, cfg.sobol);
  const auto& ref = ctx.mcs();
  const auto errs = uq_errors(summary, ref);
  const std::filesystem::path dir = cfg.out;
  detail::write_uq_files(dir, pb, summary, ref);
  nlohmann::ordered_json j;
  j["problem"] = pb.name;
  j["model"] = model_path.string();
  j["mean_mae"] = errs.mean_mae;
  j["std_mae"] = errs.std_mae;
  j["mcs_samples"] = errs.mcs_samples;
  j["mcs_seed"] = prm.mcs_seed();
  atomic_write(dir / "uq_summary.json", detail::json_text(j));
  return errs;
}

struct BenchmarkRow {
  std::string problem;
  std::string mode;
  bool ok = false;
  double mse = 0.0;
  std::optional<UqErrors> uq;
  double fit_seconds = 0.0;
  double total_seconds = 0.0;
  std::string message;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  bool all_ok() const {
    return std::all_of(rows.begin(), rows.end(), [](const BenchmarkRow& r) { return r.ok; });
  }
};

/// Every listed problem under every mode. A failing row is recorded and the
/// suite continues.
inline BenchmarkResult run_benchmark(const SuiteConfig& suite) {
  BenchmarkResult result;
  for (auto cfg : suite.problems) {
    cfg.uq = suite.uq;
    cfg.threads = suite.threads;
    if (suite.seed) cfg.seed = suite.seed;
    std::optional<ProblemContext> ctx;
    for (const auto mode : suite.modes) {
      cfg.mode = mode;
      BenchmarkRow row;
      row.problem = cfg.problem_id();
      row.mode = to_string(mode);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        if (!ctx) ctx.emplace(cfg);
        const auto out = run_fit(cfg, *ctx);
        row.ok = out.report.converged;
        row.mse = out.report.mse;
        row.uq = out.report.uq;
        row.fit_seconds = out.report.timings.fit;
        if (!out.report.converged) row.message = "Gauss-Newton did not converge";
      } catch (const Error& e) {
        row.message = e.what();
      }
      row.total_seconds = ProblemContext::elapsed(t0);
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

inline void write_benchmark(const std::filesystem::path& dir, const BenchmarkResult& result) {
  CsvTable table({"problem", "mode", "status", "mse", "mean_mae", "std_mae", "fit_seconds", "total_seconds"});
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : result.rows) {
    const std::string na = "nan";
    table.add_row({r.problem, r.mode, r.ok ? "ok" : "failed", r.ok ? format_double(r.mse) : na,
                   r.uq ? format_double(r.uq->mean_mae) : na, r.uq ? format_double(r.uq->std_mae) : na,
                   format_double(r.fit_seconds), format_double(r.total_seconds)});
    nlohmann::ordered_json row{{"problem", r.problem}, {"mode", r.mode}, {"ok", r.ok}};
    if (r.ok) row["mse"] = r.mse;
    if (r.uq) row["uq"] = {{"mean_mae", r.uq->mean_mae}, {"std_mae", r.uq->std_mae}};
    row["fit_seconds"] = r.fit_seconds;
    row["total_seconds"] = r.total_seconds;
    if (!r.message.empty()) row["message"] = r.message;
    j.push_back(std::move(row));
  }
  table.write(dir / "benchmark.csv");
  atomic_write(dir / "benchmark.json", detail::json_text(j));
}

inline BenchmarkResult cmd_benchmark(const SuiteConfig& suite) {
  auto result = run_benchmark(suite);
  write_benchmark(suite.out, result);
  return result;
}

/// Model metadata for `inspect`.
inline nlohmann::ordered_json describe_model(const SavedModel& m) {
  const auto& c = m.coefficients;
  auto hex = [](std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  };
  nlohmann::ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["library_version"] = m.meta.library_version;
  j["problem"] = m.meta.problem;
  j["mode"] = m.meta.mode;
  j["seed"] = m.meta.seed;
  j["stochastic_set"] = {{"dim", c.set_a.dim()},
                         {"size", c.set_a.size()},
                         {"p", c.set_a.total_degree()},
                         {"q_norm", c.set_a.q_norm()},
                         {"hash", hex(c.set_a.hash())}};
  j["spatial_set"] = {{"dim", c.set_b.dim()},
                      {"size", c.set_b.size()},
                      {"q", c.set_b.total_degree()},
                      {"hash", hex(c.set_b.hash())}};
  for (std::size_t k = 0; k < c.map.dim(); ++k) {
    const std::string name = k < m.meta.axis_names.size() ? m.meta.axis_names[k] : "axis" + std::to_string(k);
    j["domain"].push_back({{"axis", name}, {"lo", c.map.lo(k)}, {"hi", c.map.hi(k)}});
  }
  for (const auto& k : m.kl)
    j["kl"].push_back({{"field", k.name},
                       {"offset", k.offset},
                       {"modes", k.eigenvalues.size()},
                       {"captured_fraction", k.captured_fraction}});
  j["coefficient_norm"] = c.values.norm();
  return j;
}

}  // namespace chaosop
