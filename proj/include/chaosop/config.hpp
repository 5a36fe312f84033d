#pragma once

// YAML run and suite configurations. Every validation failure is reported
// as "source:line:column: message" pointing at the offending node.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "chaosop/error.hpp"
#include "chaosop/io.hpp"
#include "chaosop/operator_fit.hpp"
#include "chaosop/pde_suite.hpp"

namespace chaosop {

class ConfigError : public Error {
 public:
  ConfigError(const std::string& source, int line, int column, const std::string& message)
      : Error(line > 0 ? source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + message
                       : source + ": " + message),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

enum class FitMode { DataDriven, Pc2, Pc2WithData };

inline std::string to_string(FitMode m) {
  switch (m) {
    case FitMode::DataDriven: return "data_driven";
    case FitMode::Pc2: return "pc2";
    case FitMode::Pc2WithData: return "pc2_with_data";
  }
  return "?";
}

inline std::optional<FitMode> parse_mode(const std::string& s) {
  if (s == "data_driven") return FitMode::DataDriven;
  if (s == "pc2") return FitMode::Pc2;
  if (s == "pc2_with_data") return FitMode::Pc2WithData;
  return std::nullopt;
}

struct PointOverride {
  std::optional<std::size_t> pde, bc, ic;
};

struct FitOverride {
  std::optional<double> ridge, grad_tol, damping, cg_tol;
  std::optional<int> max_iter, cg_max_iter;

  FitOptions apply(FitOptions base) const {
    if (ridge) base.ridge = *ridge;
    if (grad_tol) base.grad_tol = *grad_tol;
    if (damping) base.damping = *damping;
    if (cg_tol) base.cg_tol = *cg_tol;
    if (max_iter) base.max_iter = *max_iter;
    if (cg_max_iter) base.cg_max_iter = *cg_max_iter;
    return base;
  }
};

struct RunConfig {
  std::string problem = "antiderivative";
  FitMode mode = FitMode::Pc2;
  bool full_scale = false;
  std::optional<int> p;
  std::optional<int> q;
  std::optional<double> hyperbolic_q;
  std::optional<std::size_t> n_train, n_test, n_unlabeled, n_mcs;
  PointOverride points;
  SolverGrid solver;
  FitOverride fit;
  double data_weight = 1.0;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool uq = false;
  bool sobol = true;
  std::string out = "out";

  std::string problem_id() const { return problem == "heat2d" && full_scale ? "heat2d_full" : problem; }
};

struct SuiteConfig {
  std::vector<FitMode> modes{FitMode::DataDriven, FitMode::Pc2};
  bool uq = true;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out = "out";
  std::vector<RunConfig> problems;  // one per problem; mode is taken from `modes`
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& message) const {
    const auto mark = node.Mark();
    throw ConfigError(source_, mark.line >= 0 ? mark.line + 1 : 0, mark.column + 1, message);
  }

  YAML::Node load(const std::string& text) const {
    try {
      auto root = YAML::Load(text);
      if (!root.IsMap()) throw ConfigError(source_, root.IsDefined() ? root.Mark().line + 1 : 0, 1,
                                           "top level must be a mapping");
      return root;
    } catch (const YAML::ParserException& e) {
      throw ConfigError(source_, e.mark.line + 1, e.mark.column + 1, e.msg);
    }
  }

  void only_keys(const YAML::Node& map, const std::set<std::string>& allowed) const {
    if (!map.IsMap()) fail(map, "expected a mapping");
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "'");
    }
  }

  template <class T>
  T scalar(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) fail(node, what + " must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, what + ": cannot read '" + node.Scalar() + "'");
    }
  }

  std::size_t count(const YAML::Node& node, const std::string& what, std::size_t min) const {
    const auto v = scalar<long long>(node, what);
    if (v < static_cast<long long>(min)) fail(node, what + " must be at least " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }

  double positive(const YAML::Node& node, const std::string& what, bool allow_zero = false) const {
    const auto v = scalar<double>(node, what);
    if (!std::isfinite(v) || v < 0.0 || (!allow_zero && v == 0.0))
      fail(node, what + (allow_zero ? " must be non-negative" : " must be positive"));
    return v;
  }

  std::uint64_t seed(const YAML::Node& node) const {
    const auto v = scalar<long long>(node, "seed");
    if (v < 0) fail(node, "seed must be non-negative");
    return static_cast<std::uint64_t>(v);
  }

  // Fields shared by a run config and a suite's per-problem entry.
  void run_fields(const YAML::Node& root, RunConfig& cfg, bool expensive, bool allow_mode) const {
    std::set<std::string> keys{"problem", "scale", "p", "q", "hyperbolic_q", "n_train", "n_test", "n_unlabeled",
                               "n_mcs", "points", "solver", "fit", "seed", "threads", "uq", "sobol", "out"};
    if (allow_mode) keys.insert("mode");
    only_keys(root, keys);

    if (!root["problem"]) fail(root, "missing key 'problem'");
    cfg.problem = scalar<std::string>(root["problem"], "problem");
    const auto& names = problem_names();
    if (std::find(names.begin(), names.end(), cfg.problem) == names.end())
      fail(root["problem"], "unknown problem '" + cfg.problem + "'");
    if (allow_mode && root["mode"]) {
      const auto m = parse_mode(scalar<std::string>(root["mode"], "mode"));
      if (!m) fail(root["mode"], "mode must be data_driven, pc2 or pc2_with_data");
      cfg.mode = *m;
    }
    if (const auto n = root["scale"]) {
      const auto s = scalar<std::string>(n, "scale");
      if (s != "desk" && s != "full") fail(n, "scale must be desk or full");
      if (s == "full" && cfg.problem != "heat2d") fail(n, "scale: full exists only for heat2d");
      if (s == "full" && !expensive) fail(n, "scale: full is the expensive heat run; pass --expensive");
      cfg.full_scale = s == "full";
    }
    if (const auto n = root["p"]) cfg.p = static_cast<int>(bounded(n, "p", 0, 30));
    if (const auto n = root["q"]) cfg.q = static_cast<int>(bounded(n, "q", 0, 60));
    if (const auto n = root["hyperbolic_q"]) {
      const auto v = scalar<double>(n, "hyperbolic_q");
      if (!(v > 0.0 && v <= 1.0)) fail(n, "hyperbolic_q must lie in (0, 1]");
      cfg.hyperbolic_q = v;
    }
    if (const auto n = root["n_train"]) cfg.n_train = count(n, "n_train", 1);
    if (const auto n = root["n_test"]) cfg.n_test = count(n, "n_test", 1);
    if (const auto n = root["n_unlabeled"]) cfg.n_unlabeled = count(n, "n_unlabeled", 1);
    if (const auto n = root["n_mcs"]) cfg.n_mcs = count(n, "n_mcs", 2);
    if (const auto n = root["points"]) {
      only_keys(n, {"pde", "bc", "ic"});
      if (n["pde"]) cfg.points.pde = count(n["pde"], "points.pde", 0);
      if (n["bc"]) cfg.points.bc = count(n["bc"], "points.bc", 0);
      if (n["ic"]) cfg.points.ic = count(n["ic"], "points.ic", 0);
    }
    if (const auto n = root["solver"]) {
      only_keys(n, {"space_intervals", "time_steps"});
      if (n["space_intervals"])
        cfg.solver.space_intervals = static_cast<Eigen::Index>(count(n["space_intervals"], "solver.space_intervals", 2));
      if (n["time_steps"])
        cfg.solver.time_steps = static_cast<Eigen::Index>(count(n["time_steps"], "solver.time_steps", 1));
    }
    if (const auto n = root["fit"]) {
      only_keys(n, {"ridge", "max_iter", "grad_tol", "damping", "cg_tol", "cg_max_iter", "data_weight"});
      if (n["ridge"]) cfg.fit.ridge = positive(n["ridge"], "fit.ridge", true);
      if (n["max_iter"]) cfg.fit.max_iter = static_cast<int>(bounded(n["max_iter"], "fit.max_iter", 1, 100000));
      if (n["grad_tol"]) cfg.fit.grad_tol = positive(n["grad_tol"], "fit.grad_tol");
      if (n["damping"]) cfg.fit.damping = positive(n["damping"], "fit.damping", true);
      if (n["cg_tol"]) cfg.fit.cg_tol = positive(n["cg_tol"], "fit.cg_tol");
      if (n["cg_max_iter"])
        cfg.fit.cg_max_iter = static_cast<int>(bounded(n["cg_max_iter"], "fit.cg_max_iter", 1, 100000000));
      if (n["data_weight"]) cfg.data_weight = positive(n["data_weight"], "fit.data_weight");
    }
    if (const auto n = root["seed"]) cfg.seed = seed(n);
    if (const auto n = root["threads"]) cfg.threads = static_cast<unsigned>(bounded(n, "threads", 1, 256));
    if (const auto n = root["uq"]) cfg.uq = scalar<bool>(n, "uq");
    if (const auto n = root["sobol"]) cfg.sobol = scalar<bool>(n, "sobol");
    if (const auto n = root["out"]) cfg.out = scalar<std::string>(n, "out");
  }

  long long bounded(const YAML::Node& node, const std::string& what, long long lo, long long hi) const {
    const auto v = scalar<long long>(node, what);
    if (v < lo || v > hi) fail(node, what + " must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
  }

 private:
  std::string source_;
};

}  // namespace detail

/// Parses a single-run configuration. `expensive` unlocks scale: full.
inline RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>",
                                  bool expensive = false) {
  detail::ConfigReader r(source);
  const auto root = r.load(text);
  RunConfig cfg;
  r.run_fields(root, cfg, expensive, true);
  return cfg;
}

/// Parses a benchmark suite: shared settings plus a list of per-problem entries.
inline SuiteConfig parse_suite_config(const std::string& text, const std::string& source = "<config>",
                                      bool expensive = false) {
  detail::ConfigReader r(source);
  const auto root = r.load(text);
  r.only_keys(root, {"modes", "uq", "seed", "threads", "out", "problems"});
  SuiteConfig suite;
  if (const auto n = root["modes"]) {
    if (!n.IsSequence() || n.size() == 0) r.fail(n, "modes must be a non-empty list");
    suite.modes.clear();
    for (const auto& m : n) {
      const auto mode = parse_mode(r.scalar<std::string>(m, "mode"));
      if (!mode) r.fail(m, "mode must be data_driven, pc2 or pc2_with_data");
      suite.modes.push_back(*mode);
    }
  }
  if (const auto n = root["uq"]) suite.uq = r.scalar<bool>(n, "uq");
  if (const auto n = root["seed"]) suite.seed = r.seed(n);
  if (const auto n = root["threads"]) suite.threads = static_cast<unsigned>(r.bounded(n, "threads", 1, 256));
  if (const auto n = root["out"]) suite.out = r.scalar<std::string>(n, "out");
  if (const auto n = root["problems"]) {
    if (!n.IsSequence() || n.size() == 0) r.fail(n, "problems must be a non-empty list");
    std::set<std::string> seen;
    for (const auto& entry : n) {
      RunConfig cfg;
      r.run_fields(entry, cfg, expensive, false);
      if (!seen.insert(cfg.problem_id()).second) r.fail(entry, "problem '" + cfg.problem + "' listed twice");
      suite.problems.push_back(std::move(cfg));
    }
  } else {
    for (const auto& name : problem_names()) {
      RunConfig cfg;
      cfg.problem = name;
      suite.problems.push_back(cfg);
    }
  }
  return suite;
}

inline RunConfig load_run_config(const std::filesystem::path& path, bool expensive = false) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(path.string(), 0, 0, e.what());
  }
  return parse_run_config(text, path.string(), expensive);
}

inline SuiteConfig load_suite_config(const std::filesystem::path& path, bool expensive = false) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(path.string(), 0, 0, e.what());
  }
  return parse_suite_config(text, path.string(), expensive);
}

}  // namespace chaosop
