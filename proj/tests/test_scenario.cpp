// Scenario configuration: built-in experiment builders, JSON round trips, and
// field-path error reporting.

#include <mle/scenario.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using nlohmann::json;

namespace {

json column_json() { return mle::scenario_to_json(mle::gain_mismatch_scenario(1, 1)); }

}  // namespace

TEST_CASE("built-in column scenarios carry the study configuration", "[scenario]") {
  const mle::Scenario s1 = mle::gain_mismatch_scenario(1, 7);
  CHECK(s1.id == "gain_mismatch_sim1");
  CHECK(s1.seed == 7);
  CHECK(s1.noise_substream == 0);
  CHECK(s1.noise_variance == 0.001);
  CHECK(s1.sample_period == 0.2);
  CHECK(s1.horizon == 1000.0);
  CHECK(s1.mle.t_r == 500.0);
  CHECK(s1.mle.half_width == 200.0);
  CHECK_FALSE(s1.mle.include_penalty);
  CHECK(s1.mle.standardize);
  CHECK(s1.mpc.prediction_horizon == 30);
  CHECK(s1.mpc.control_horizon == 5);
  CHECK(s1.mpc.output_weight(0, 0) == 0.2);
  CHECK(s1.mpc.input_rate_weight(1, 1) == 0.1);
  CHECK(s1.mpc.control_period == 1.0);
  CHECK(s1.conversion.order == 150);
  CHECK(s1.conversion.seed == 7);

  // Simulation 1 steps only the first reference, at the window center.
  REQUIRE(s1.references.steps(0).size() == 1);
  CHECK(s1.references.steps(0)[0].time == 500.0);
  CHECK(s1.references.steps(0)[0].level == 1.0);
  CHECK(s1.references.steps(1).empty());

  // Simulation 2 holds the first output at 1 and steps the second at t_r.
  const mle::Scenario s2 = mle::gain_mismatch_scenario(2, 7);
  CHECK(s2.id == "gain_mismatch_sim2");
  CHECK(s2.noise_substream == 1);
  REQUIRE(s2.references.steps(0).size() == 1);
  CHECK(s2.references.steps(0)[0].time == 0.0);
  REQUIRE(s2.references.steps(1).size() == 1);
  CHECK(s2.references.steps(1)[0].time == 500.0);

  // The gain mismatch bends the first input column only.
  const auto gain_truth = s1.true_plant();
  CHECK(gain_truth.channel(0, 0).gain == 12.8 - 6.4);
  CHECK(gain_truth.channel(1, 0).gain == 6.6 - 3.3);
  CHECK(gain_truth.channel(0, 1).gain == -18.9);
  CHECK(gain_truth.channel(1, 1).gain == -19.4);
  CHECK(gain_truth.channel(0, 0).dead_time == 1.0);

  // The delay mismatch stretches the second input column's dead times.
  const auto delay_truth = mle::delay_mismatch_scenario(1, 7).true_plant();
  CHECK(delay_truth.channel(0, 1).dead_time == 7.0);
  CHECK(delay_truth.channel(1, 1).dead_time == 7.0);
  CHECK(delay_truth.channel(0, 0).dead_time == 1.0);
  CHECK(delay_truth.channel(0, 1).gain == -18.9);

  // The control run has no mismatch and no noise.
  const mle::Scenario null_run = mle::null_scenario(2, 7);
  CHECK(null_run.id == "null_sim2");
  CHECK_FALSE(null_run.has_mismatch());
  CHECK(null_run.noise_variance == 0.0);
  CHECK(null_run.true_plant().channel(0, 0).gain == 12.8);

  CHECK_THROWS_WITH(mle::gain_mismatch_scenario(3, 1), ContainsSubstring("1 or 2"));
}

TEST_CASE("scenario JSON round trip is exact", "[scenario]") {
  const mle::Scenario s = mle::delay_mismatch_scenario(2, 9);
  const json first = mle::scenario_to_json(s);
  const mle::Scenario back = mle::parse_scenario(first);
  const json second = mle::scenario_to_json(back);
  CHECK(first == second);

  CHECK(back.id == s.id);
  CHECK(back.seed == 9);
  CHECK(back.noise_substream == 1);
  CHECK(back.mismatch.dead_time_delta(0, 1) == 4.0);
  CHECK(back.mle.grid.kind == "log");
  CHECK(back.conversion.seed == 9);
  CHECK(back.references.steps(1).size() == 1);

  // An explicit grid survives the trip with its values intact.
  mle::Scenario explicit_grid = s;
  explicit_grid.mle.grid.kind = "explicit";
  explicit_grid.mle.grid.values = {0.0, 1e-4, 5e-3};
  const mle::Scenario back2 =
      mle::parse_scenario(mle::scenario_to_json(explicit_grid));
  CHECK(back2.mle.grid.kind == "explicit");
  CHECK(back2.mle.grid.values == std::vector<double>{0.0, 1e-4, 5e-3});
  CHECK(back2.mle.grid.resolve() == std::vector<double>{0.0, 1e-4, 5e-3});
}

TEST_CASE("lambda grid specs resolve to the documented grids", "[scenario]") {
  const auto log_grid = mle::LambdaGridSpec{}.resolve();
  REQUIRE(log_grid.size() == 62);
  CHECK(log_grid[0] == 0.0);
  CHECK_THAT(log_grid[1], WithinAbs(1e-6, 1e-18));
  CHECK_THAT(log_grid.back(), WithinAbs(1e-2, 1e-14));
  // Log spacing: fifteen points per decade.
  CHECK_THAT(log_grid[16] / log_grid[1], WithinAbs(10.0, 1e-9));

  const auto arith = mle::LambdaGridSpec{"arithmetic", {}}.resolve();
  REQUIRE(arith.size() == 10001);
  CHECK(arith[0] == 0.0);
  CHECK_THAT(arith[1], WithinAbs(1e-6, 1e-18));
  CHECK_THAT(arith[2] - arith[1], WithinAbs(1e-6, 1e-18));
  CHECK_THAT(arith.back(), WithinAbs(1e-2, 1e-12));

  CHECK_THROWS_WITH((mle::LambdaGridSpec{"cubic", {}}.resolve()),
                    ContainsSubstring("log, arithmetic, or explicit"));
}

TEST_CASE("scenario parsing names the offending field path", "[scenario]") {
  CHECK_THROWS_WITH(mle::parse_scenario(json::array()), ContainsSubstring("scenario"));
  CHECK_THROWS_WITH(mle::parse_scenario(json::object()),
                    ContainsSubstring("scenario.plant is missing"));

  auto no_gain = column_json();
  no_gain["plant"]["channels"][0][1].erase("gain");
  CHECK_THROWS_WITH(mle::parse_scenario(no_gain),
                    ContainsSubstring("scenario.plant.channels[0][1].gain is missing"));

  auto bad_tc = column_json();
  bad_tc["plant"]["channels"][1][0]["time_constant"] = -3.0;
  CHECK_THROWS_WITH(mle::parse_scenario(bad_tc),
                    ContainsSubstring("scenario.plant.channels[1][0].time_constant"));

  auto negative_dead_time = column_json();
  negative_dead_time["plant"]["mismatch"]["dead_time_delta"][0][0] = -2.0;
  CHECK_THROWS_WITH(mle::parse_scenario(negative_dead_time),
                    ContainsSubstring("drives the dead time negative"));

  auto short_horizon = column_json();
  short_horizon["horizon"] = 600.0;  // < t_r + half_width = 700
  CHECK_THROWS_WITH(mle::parse_scenario(short_horizon),
                    ContainsSubstring("scenario.horizon"));

  auto bad_kind = column_json();
  bad_kind["mle"]["grid"]["kind"] = "linear";
  CHECK_THROWS_WITH(mle::parse_scenario(bad_kind),
                    ContainsSubstring("scenario.mle.grid.kind"));

  auto wrong_tracks = column_json();
  wrong_tracks["references"].erase(1);
  CHECK_THROWS_WITH(mle::parse_scenario(wrong_tracks),
                    ContainsSubstring("scenario.references"));

  auto negative_variance = column_json();
  negative_variance["noise"]["variance"] = -0.5;
  CHECK_THROWS_WITH(mle::parse_scenario(negative_variance),
                    ContainsSubstring("scenario.noise.variance"));

  auto negative_weight = column_json();
  negative_weight["mpc"]["output_weight"] = -1.0;
  CHECK_THROWS_WITH(mle::parse_scenario(negative_weight),
                    ContainsSubstring("scenario.mpc.output_weight"));

  auto bad_horizons = column_json();
  bad_horizons["mpc"]["control_horizon"] = 40;  // > prediction_horizon = 30
  CHECK_THROWS_WITH(mle::parse_scenario(bad_horizons),
                    ContainsSubstring("scenario.mpc.control_horizon"));

  auto unordered_steps = column_json();
  unordered_steps["references"][0] = {{{"time", 500.0}, {"level", 1.0}},
                                      {{"time", 100.0}, {"level", 2.0}}};
  CHECK_THROWS_WITH(mle::parse_scenario(unordered_steps),
                    ContainsSubstring("scenario.references[0][1]"));
}

TEST_CASE("scalar MPC weights expand to scaled identities", "[scenario]") {
  auto root = column_json();
  root["mpc"]["output_weight"] = 0.7;
  root["mpc"]["input_rate_weight"] = 0.3;
  const mle::Scenario s = mle::parse_scenario(root);
  CHECK(s.mpc.output_weight.isApprox(0.7 * Eigen::MatrixXd::Identity(2, 2)));
  CHECK(s.mpc.input_rate_weight.isApprox(0.3 * Eigen::MatrixXd::Identity(2, 2)));
}

TEST_CASE("optional scenario fields fall back to defaults", "[scenario]") {
  auto root = column_json();
  root.erase("id");
  root.erase("conversion");
  root.erase("benchmark_horizon");
  root["mle"].erase("grid");
  root["mle"].erase("include_penalty");
  root["mle"].erase("standardize");
  root["noise"].erase("seed");
  root["noise"].erase("substream");
  root["mpc"].erase("substeps");
  const mle::Scenario s = mle::parse_scenario(root);
  CHECK(s.id == "scenario");
  CHECK(s.seed == 1);
  CHECK(s.noise_substream == 0);
  CHECK(s.mle.grid.kind == "log");
  CHECK_FALSE(s.mle.include_penalty);
  CHECK(s.mle.standardize);
  CHECK(s.mpc.substeps == 5);
  CHECK(s.benchmark_horizon == 100.0);
  CHECK(s.conversion.order == 150);
  CHECK(s.conversion.excitation_duration == 10000.0);
  CHECK(s.conversion.lambda0 == 1e-6);
  // The conversion inherits the scenario's sampling and seed.
  CHECK(s.conversion.sample_period == 0.2);
  CHECK(s.conversion.seed == s.seed);
}

TEST_CASE("scenario files load with path-tagged errors", "[scenario]") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto good = dir / "mle_scenario_good.json";
  {
    std::ofstream out(good);
    out << column_json().dump(2) << "\n";
  }
  const mle::Scenario s = mle::load_scenario(good.string());
  CHECK(s.id == "gain_mismatch_sim1");
  std::remove(good.string().c_str());

  CHECK_THROWS_WITH(mle::load_scenario((dir / "mle_no_such_file.json").string()),
                    ContainsSubstring("mle_no_such_file.json"));

  const auto broken = dir / "mle_scenario_broken.json";
  {
    std::ofstream out(broken);
    out << "{ not json";
  }
  CHECK_THROWS_WITH(mle::load_scenario(broken.string()),
                    ContainsSubstring("mle_scenario_broken.json"));
  std::remove(broken.string().c_str());
}
