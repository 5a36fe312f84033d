// chaosop: fit, evaluate and inspect polynomial-chaos operator surrogates.
//
// Exit codes: 0 ok, 2 config error, 3 fit failure, 4 I/O error.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "chaosop/bench.hpp"

namespace {

enum Exit : int { kOk = 0, kConfig = 2, kFit = 3, kIo = 4 };

struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<long long> seed;
  std::optional<unsigned> threads;
  bool expensive = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "YAML configuration file");
  if (config_required) opt->required();
  cmd->add_option("--out", c.out, "Output directory (overrides the config)");
  cmd->add_option("--seed", c.seed, "Base seed (overrides the config)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--threads", c.threads, "Worker threads for reference solves")->check(CLI::Range(1, 256));
  cmd->add_flag("--expensive", c.expensive, "Allow the full-scale 2D heat configuration");
}

template <class Config>
void apply(const Common& c, Config& cfg) {
  if (c.out) cfg.out = *c.out;
  if (c.seed) cfg.seed = static_cast<std::uint64_t>(*c.seed);
  if (c.threads) cfg.threads = *c.threads;
}

int run(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const chaosop::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const chaosop::ModelIncompatibleError& e) {
    std::cerr << "incompatible model: " << e.what() << "\n";
    return kConfig;
  } catch (const chaosop::ParameterError& e) {
    std::cerr << "invalid parameter: " << e.what() << "\n";
    return kConfig;
  } catch (const chaosop::ModelFormatError& e) {
    std::cerr << "bad model file: " << e.what() << "\n";
    return kIo;
  } catch (const chaosop::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const chaosop::Error& e) {
    std::cerr << "fit failed: " << e.what() << "\n";
    return kFit;
  } catch (const std::exception& e) {
    std::cerr << "fit failed: " << e.what() << "\n";
    return kFit;
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace chaosop;
  CLI::App app{"Polynomial chaos operator surrogates: data-driven and physics-constrained fits"};
  app.require_subcommand(1);

  Common fit_opts, uq_opts, bench_opts;
  std::string uq_model, inspect_model;

  auto* fit = app.add_subcommand("fit", "Generate data, fit one configuration, evaluate and save the model");
  add_common(fit, fit_opts, true);

  auto* uq = app.add_subcommand("uq", "Moments and Sobol indices of a saved model against Monte Carlo");
  add_common(uq, uq_opts, true);
  uq->add_option("--model", uq_model, "Model file written by fit")->required();

  auto* bench = app.add_subcommand("benchmark", "Every problem under every mode; one report row each");
  add_common(bench, bench_opts, false);

  auto* inspect = app.add_subcommand("inspect", "Print model metadata as JSON");
  inspect->add_option("model", inspect_model, "Model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (fit->parsed()) {
    return run([&] {
      auto cfg = load_run_config(fit_opts.config, fit_opts.expensive);
      apply(fit_opts, cfg);
      const auto out = cmd_fit(cfg);
      std::cout << out.report.to_json().dump(2) << "\n";
      if (!out.report.converged) throw StagnationError(out.model.coefficients.values, out.report.trace.back().loss);
    });
  }
  if (uq->parsed()) {
    return run([&] {
      auto cfg = load_run_config(uq_opts.config, uq_opts.expensive);
      apply(uq_opts, cfg);
      const auto errs = cmd_uq(uq_model, cfg);
      std::cout << "mean_mae " << errs.mean_mae << "\nstd_mae " << errs.std_mae << "\n";
    });
  }
  if (bench->parsed()) {
    int code = kOk;
    const int status = run([&] {
      SuiteConfig suite = bench_opts.config.empty() ? parse_suite_config("{}", "<default suite>")
                                                    : load_suite_config(bench_opts.config, bench_opts.expensive);
      apply(bench_opts, suite);
      const auto result = cmd_benchmark(suite);
      std::printf("%-20s %-14s %-7s %12s %12s %12s %10s\n", "problem", "mode", "status", "mse", "mean_mae", "std_mae",
                  "fit_s");
      for (const auto& r : result.rows) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        std::printf("%-20s %-14s %-7s %12.4e %12.4e %12.4e %10.2f\n", r.problem.c_str(), r.mode.c_str(),
                    r.ok ? "ok" : "FAILED", r.ok ? r.mse : nan, r.uq ? r.uq->mean_mae : nan,
                    r.uq ? r.uq->std_mae : nan, r.fit_seconds);
        if (!r.ok) std::fprintf(stderr, "%s/%s: %s\n", r.problem.c_str(), r.mode.c_str(), r.message.c_str());
      }
      if (!result.all_ok()) code = kFit;
    });
    return status != kOk ? status : code;
  }
  return run([&] { std::cout << describe_model(load_model(inspect_model)).dump(2) << "\n"; });
}
