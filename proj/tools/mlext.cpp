// mlext: scenario-driven model life-extension toolkit.
//
// Subcommands simulate closed loops, convert transfer-matrix plants to lagged
// predictors, estimate model-plant mismatch from routine data, sweep the
// regularization path against the benchmark, and reproduce the full study.
// Every command is a pure function of (files, flags, seed): rerunning yields
// byte-identical outputs.  Errors leave a machine-readable JSON object on
// stderr and a nonzero exit code.

#include <mle/bench.hpp>
#include <mle/reproduce.hpp>
#include <mle/scenario.hpp>
#include <mle/serialize.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GlobalFlags {
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  int threads = 1;
  std::string log_level = "info";
};

void log_info(const GlobalFlags& flags, const std::string& message) {
  if (flags.log_level != "quiet") std::cerr << message << "\n";
}

mle::Scenario load_scenario_with_overrides(const std::string& path, const GlobalFlags& flags) {
  mle::Scenario scenario = mle::load_scenario(path);
  if (flags.seed) {
    scenario.seed = *flags.seed;
    scenario.conversion.seed = *flags.seed;
  }
  return scenario;
}

/// A model argument may be a lagged-predictor JSON ({coefficients, ...}) or a
/// scenario JSON ({plant, ...}), in which case the scenario's true plant is
/// meant.  Exactly one of the two members is set.
struct LoadedModel {
  std::optional<mle::ArxModel> arx;
  std::optional<mle::TransferMatrixModel> plant;
};

LoadedModel load_model_arg(const std::string& path) {
  const json root = mle::detail::read_json_file(path);
  LoadedModel out;
  if (root.is_object() && root.contains("coefficients")) {
    out.arx = mle::arx_from_json(root, "'" + path + "'");
  } else {
    out.plant = mle::parse_scenario(root).true_plant();
  }
  return out;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 const GlobalFlags& flags) {
  const mle::Scenario s = load_scenario_with_overrides(scenario_path, flags);
  const auto record =
      mle::run_closed_loop(s.true_plant(), s.nominal, s.mpc, s.references, s.loop_config());
  fs::create_directories(out_dir);
  const fs::path record_path = fs::path(out_dir) / "record.csv";
  mle::write_record_csv(record, record_path.string());
  log_info(flags, "wrote " + record_path.string() + " (" + std::to_string(record.samples()) +
                      " samples)");
  return 0;
}

int cmd_convert(const std::string& scenario_path, const std::string& out_file,
                const GlobalFlags& flags) {
  const mle::Scenario s = load_scenario_with_overrides(scenario_path, flags);
  const mle::ArxModel model = mle::convert_from_plant(s.nominal, s.conversion);
  mle::save_arx(model, out_file);
  log_info(flags, "wrote " + out_file + " (" + std::to_string(model.coefficients().size()) +
                      " coefficients)");
  return 0;
}

int cmd_estimate(const std::string& scenario_path, const std::vector<std::string>& record_paths,
                 const std::string& out_file, const GlobalFlags& flags) {
  const mle::Scenario s = load_scenario_with_overrides(scenario_path, flags);
  const mle::ArxModel base = mle::convert_from_plant(s.nominal, s.conversion);
  const auto rec1 = mle::read_record_csv(record_paths[0]);
  const auto rec2 = mle::read_record_csv(record_paths[1]);

  mle::CvOptions options;
  options.standardize = s.mle.standardize;
  options.include_penalty = s.mle.include_penalty;
  const mle::CvReport report = mle::run_mle_pipeline(rec1, rec2, s.mle.t_r, s.mle.half_width,
                                                     base, s.mle.grid.resolve(), options);

  const fs::path report_path(out_file);
  const fs::path model_path = report_path.parent_path() / "r_hat_star.json";
  mle::save_arx(report.final_estimate.corrected, model_path.string());
  mle::detail::write_json_file(mle::cv_report_to_json(report, model_path.filename().string()),
                               out_file);
  log_info(flags, "lambda* = " + mle::csv::format_double(report.lambda_star) + "; wrote " +
                      out_file + " and " + model_path.string());
  return 0;
}

int cmd_cv_sweep(const std::string& scenario_path, const std::vector<std::string>& record_paths,
                 const std::string& out_file, const GlobalFlags& flags) {
  const mle::Scenario s = load_scenario_with_overrides(scenario_path, flags);
  const mle::ArxModel base = mle::convert_from_plant(s.nominal, s.conversion);
  const auto rec1 = mle::read_record_csv(record_paths[0]);
  const auto rec2 = mle::read_record_csv(record_paths[1]);
  const auto d1 = mle::build_dataset(rec1, mle::extract_window(rec1, s.mle.t_r, s.mle.half_width),
                                     base.order());
  const auto d2 = mle::build_dataset(rec2, mle::extract_window(rec2, s.mle.t_r, s.mle.half_width),
                                     base.order());
  mle::EstimateOptions options;
  options.standardize = s.mle.standardize;
  const auto sweep = mle::lambda_sweep(s.true_plant(), d1, d2, base, s.mle.grid.resolve(),
                                       s.benchmark_horizon, options);
  mle::write_sweep_csv(sweep, out_file);
  log_info(flags, "wrote " + out_file + " (" + std::to_string(sweep.size()) + " points)");
  return 0;
}

int cmd_bench(const std::string& truth_path, const std::string& model_path, double horizon,
              const std::string& out_file, const GlobalFlags& flags) {
  const LoadedModel truth = load_model_arg(truth_path);
  const LoadedModel candidate = load_model_arg(model_path);

  mle::BenchmarkResult result;
  if (truth.plant && candidate.plant)
    result = mle::step_benchmark(*truth.plant, *candidate.plant, horizon);
  else if (truth.plant && candidate.arx)
    result = mle::step_benchmark(*truth.plant, *candidate.arx, horizon);
  else if (truth.arx && candidate.plant)
    result = mle::step_benchmark(*candidate.plant, *truth.arx, horizon);
  else
    result = mle::step_benchmark(*truth.arx, *candidate.arx, horizon);

  json root;
  root["error"] = result.error;
  root["horizon_min"] = result.horizon;
  root["sample_period_min"] = result.sample_period;
  root["contributions"] = mle::detail::matrix_to_json(result.contributions);
  if (out_file.empty()) {
    std::cout << root.dump(2) << "\n";
  } else {
    mle::detail::write_json_file(root, out_file);
    log_info(flags, "wrote " + out_file);
  }
  return 0;
}

int cmd_reproduce(const std::string& out_dir, std::uint64_t seed, bool null_mode,
                  const GlobalFlags& flags) {
  log_info(flags, std::string("reproducing the ") + (null_mode ? "control" : "mismatch") +
                      " study with seed " + std::to_string(seed));
  const json summary = mle::run_reproduction(out_dir, seed, null_mode);
  log_info(flags, "wrote " + (fs::path(out_dir) / "summary.json").string());
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model life-extension toolkit: simulate, estimate, verify."};
  app.require_subcommand(1);
  app.fallthrough();  // accept global flags after the subcommand, too
  app.failure_message(CLI::FailureMessage::simple);

  GlobalFlags flags;
  std::uint64_t seed_flag = 0;
  auto* seed_opt =
      app.add_option("--seed", seed_flag, "Override the scenario master seed")->capture_default_str();
  app.add_option("--threads", flags.threads, "Worker thread budget (results are identical)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--log-level", flags.log_level, "quiet, info, or debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}))
      ->capture_default_str();

  std::string scenario_path, out_path, truth_path, model_path;
  std::vector<std::string> record_paths;
  double bench_horizon = 100.0;
  bool null_mode = false;
  std::uint64_t reproduce_seed = 1;

  auto* simulate = app.add_subcommand("simulate", "Run one closed-loop experiment");
  simulate->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  simulate->add_option("-o,--output", out_path, "Output directory")->required();

  auto* convert = app.add_subcommand("convert", "Fit the lagged predictor of the nominal plant");
  convert->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  convert->add_option("-o,--output", out_path, "Output model JSON file")->required();

  auto* estimate = app.add_subcommand("estimate", "Estimate the mismatch from recorded data");
  estimate->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  estimate->add_option("--records", record_paths, "Two record CSV files")
      ->expected(2)
      ->required();
  estimate->add_option("-o,--output", out_path, "Output report JSON file")->required();

  auto* cv_sweep = app.add_subcommand("cv-sweep", "Benchmark the whole regularization path");
  cv_sweep->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  cv_sweep->add_option("--records", record_paths, "Two record CSV files")
      ->expected(2)
      ->required();
  cv_sweep->add_option("-o,--output", out_path, "Output sweep CSV file")->required();

  auto* bench = app.add_subcommand("bench", "Squared step-response distance of two models");
  bench->add_option("--truth", truth_path, "Reference: scenario JSON (its true plant) or model JSON")
      ->required();
  bench->add_option("--model", model_path, "Candidate: scenario JSON or model JSON")->required();
  bench->add_option("--horizon", bench_horizon, "Horizon in minutes")->capture_default_str();
  bench->add_option("-o,--output", out_path, "Output JSON file (default: stdout)");

  auto* reproduce = app.add_subcommand("reproduce", "Run the full study end to end");
  reproduce->add_option("-o,--output", out_path, "Output directory")->required();
  reproduce->add_option("--seed", reproduce_seed, "Master seed")->capture_default_str();
  reproduce->add_flag("--null", null_mode, "No-mismatch control run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) return app.exit(err);  // --help and friends
    json diagnostic;
    diagnostic["error"] = {{"stage", "arguments"}, {"message", err.what()}};
    std::cerr << diagnostic.dump() << "\n";
    return err.get_exit_code();
  }

  if (*seed_opt) flags.seed = seed_flag;

  try {
    if (*simulate) return cmd_simulate(scenario_path, out_path, flags);
    if (*convert) return cmd_convert(scenario_path, out_path, flags);
    if (*estimate) return cmd_estimate(scenario_path, record_paths, out_path, flags);
    if (*cv_sweep) return cmd_cv_sweep(scenario_path, record_paths, out_path, flags);
    if (*bench) return cmd_bench(truth_path, model_path, bench_horizon, out_path, flags);
    if (*reproduce) {
      if (flags.seed) reproduce_seed = *flags.seed;
      return cmd_reproduce(out_path, reproduce_seed, null_mode, flags);
    }
  } catch (const std::exception& err) {
    json diagnostic;
    diagnostic["error"] = {{"message", err.what()}};
    std::cerr << diagnostic.dump() << "\n";
    return 1;
  }
  return 0;
}
