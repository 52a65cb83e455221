// JSON/CSV serialization: exact model round trips, report schema, curve files.

#include <mle/scenario.hpp>
#include <mle/serialize.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using Catch::Matchers::ContainsSubstring;
using nlohmann::json;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

mle::ArxModel tiny_model() {
  Eigen::MatrixXd coeffs(2, 6);
  coeffs << 0.5, -0.25, 1.0 / 3.0, 0.0, 1e-17, 2.0,
      -1.5, 0.75, 0.0, -1.0 / 7.0, 4.0, 1e300;
  return mle::ArxModel(2, 1, 2, 0.2, coeffs);
}

}  // namespace

TEST_CASE("arx model json round trip is bitwise exact", "[serialize]") {
  const mle::ArxModel model = tiny_model();
  const auto path = temp_file("mle_model_roundtrip.json");
  mle::save_arx(model, path.string());
  const mle::ArxModel back = mle::load_arx(path.string());
  CHECK(back.outputs() == 2);
  CHECK(back.inputs() == 1);
  CHECK(back.order() == 2);
  CHECK(back.sample_period() == 0.2);
  // Bitwise: nlohmann serializes doubles shortest-round-trip.
  CHECK(back.coefficients() == model.coefficients());

  // A second save of the loaded model produces identical bytes.
  const auto path2 = temp_file("mle_model_roundtrip2.json");
  mle::save_arx(back, path2.string());
  CHECK(slurp(path) == slurp(path2));
  CHECK(slurp(path).back() == '\n');
  std::remove(path.string().c_str());
  std::remove(path2.string().c_str());
}

TEST_CASE("arx model json rejects malformed input with field paths", "[serialize]") {
  json good = mle::arx_to_json(tiny_model());

  json missing = good;
  missing.erase("order");
  CHECK_THROWS_WITH(mle::arx_from_json(missing), ContainsSubstring("model.order is missing"));

  json fractional = good;
  fractional["outputs"] = 1.5;
  CHECK_THROWS_WITH(mle::arx_from_json(fractional),
                    ContainsSubstring("model.outputs must be an integer"));

  json wrong_shape = good;
  wrong_shape["order"] = 3;  // coefficients stay 2 x 6, but 3 * (2 + 1) = 9 expected
  CHECK_THROWS_WITH(mle::arx_from_json(wrong_shape),
                    ContainsSubstring("model.coefficients must be 2 x 9"));

  json ragged = good;
  ragged["coefficients"][1] = {1.0, 2.0};
  CHECK_THROWS_WITH(mle::arx_from_json(ragged), ContainsSubstring("coefficients"));

  CHECK_THROWS_WITH(mle::load_arx(temp_file("mle_no_model.json").string()),
                    ContainsSubstring("mle_no_model.json"));
}

TEST_CASE("transfer matrix json lists channels row by row", "[serialize]") {
  const json root = mle::transfer_matrix_to_json(mle::wood_berry());
  CHECK(root.at("outputs") == 2);
  CHECK(root.at("inputs") == 2);
  CHECK(root.at("channels")[0][0].at("gain") == 12.8);
  CHECK(root.at("channels")[1][0].at("dead_time") == 7.0);
  CHECK(root.at("channels")[0][1].at("time_constant") == 21.0);
}

TEST_CASE("cv report json derives both loss conventions", "[serialize]") {
  mle::MpmEstimate final_estimate{Eigen::MatrixXd{{1.0, -2.0}}, 1e-3,
                                  mle::ArxModel(1, 1, 1, 0.2, Eigen::MatrixXd{{0.5, 0.1}}),
                                  false};
  mle::CvReport report{{0.0, 1e-3, 1e-2},      // lambda_grid
                       {0.4, 0.3, 0.5},        // loss_fold1
                       {0.2, 0.1, 0.3},        // loss_fold2
                       {10.0, 4.0, 0.0},       // l1_fold1
                       {8.0, 2.0, 0.0},        // l1_fold2
                       false,                  // penalty_in_loss
                       1e-3,                   // lambda_star
                       std::move(final_estimate),
                       {"identical datasets"}};

  const json root = mle::cv_report_to_json(report, "r_hat_star.json");
  CHECK(root.at("lambda_star") == 1e-3);
  CHECK(root.at("corrected_model") == "r_hat_star.json");
  CHECK(root.at("delta_r_l1_norm") == 3.0);
  CHECK(root.at("rank_deficient") == false);
  CHECK(root.at("penalty_in_loss") == false);
  CHECK(root.at("warnings")[0] == "identical datasets");

  // With penalty_in_loss = false the recorded losses are already bare.
  const auto sum = root.at("loss_sum").get<std::vector<double>>();
  const auto bare = root.at("loss_sum_bare").get<std::vector<double>>();
  const auto pen = root.at("loss_sum_penalized").get<std::vector<double>>();
  REQUIRE(sum.size() == 3);
  CHECK(sum == std::vector<double>{0.6000000000000001, 0.4, 0.8});
  CHECK(bare == sum);
  CHECK(pen[0] == bare[0]);                   // lambda = 0 adds nothing
  CHECK(pen[1] == bare[1] + 1e-3 * 6.0);      // lambda * (4 + 2)
  CHECK(pen[2] == bare[2]);                   // fully shrunk: no penalty

  // With penalty_in_loss = true the bare curve is recovered by subtraction.
  report.penalty_in_loss = true;
  const json root2 = mle::cv_report_to_json(report, "r_hat_star.json");
  const auto bare2 = root2.at("loss_sum_bare").get<std::vector<double>>();
  const auto pen2 = root2.at("loss_sum_penalized").get<std::vector<double>>();
  const auto sum2 = root2.at("loss_sum").get<std::vector<double>>();
  CHECK(pen2 == sum2);
  CHECK(bare2[1] == 0.4 - 1e-3 * 6.0);
}

TEST_CASE("curve and sweep CSVs use shortest round-trip formatting", "[serialize]") {
  mle::ResponseCurve curve;
  curve.kind = mle::ResponseKind::step;
  curve.sample_period = 0.2;
  curve.values = Eigen::VectorXd{{0.0, 0.1, -2.5}};
  const auto curve_path = temp_file("mle_curve.csv");
  mle::write_curve_csv(curve, curve_path.string());
  CHECK(slurp(curve_path) == "t_min,value\n0,0\n0.2,0.1\n0.4,-2.5\n");
  std::remove(curve_path.string().c_str());

  const std::vector<mle::SweepPoint> sweep{{0.0, 19362.807028259784}, {1e-3, 11.5}};
  const auto sweep_path = temp_file("mle_sweep.csv");
  mle::write_sweep_csv(sweep, sweep_path.string());
  CHECK(slurp(sweep_path) == "lambda,error\n0,19362.807028259784\n0.001,11.5\n");
  std::remove(sweep_path.string().c_str());
}

TEST_CASE("json files round trip through disk with a trailing newline", "[serialize]") {
  const json root = {{"b", 2}, {"a", {1.5, "x", true}}};
  const auto path = temp_file("mle_json_roundtrip.json");
  mle::detail::write_json_file(root, path.string());
  const std::string text = slurp(path);
  CHECK(text.back() == '\n');
  CHECK(mle::detail::read_json_file(path.string()) == root);
  CHECK_THROWS_WITH(mle::detail::read_json_file(temp_file("mle_absent.json").string()),
                    ContainsSubstring("mle_absent.json"));
  std::remove(path.string().c_str());

  const Eigen::MatrixXd m = Eigen::MatrixXd{{1.0, 2.0}, {3.0, 4.0 / 3.0}};
  const json as_json = mle::detail::matrix_to_json(m);
  CHECK(mle::detail::matrix_from_json(as_json, "m") == m);
  const json not_matrix{{"not", "matrix"}};
  CHECK_THROWS_WITH(mle::detail::matrix_from_json(not_matrix, "m"),
                    ContainsSubstring("m"));
}
