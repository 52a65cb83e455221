#pragma once

// JSON and CSV serialization for models, cross-validation reports, and
// response curves.  JSON numbers round-trip exactly (shortest representation)
// and keys are emitted in sorted order, so repeated runs produce byte-
// identical files.

#include <mle/arx.hpp>
#include <mle/bench.hpp>
#include <mle/csv.hpp>
#include <mle/estimation.hpp>
#include <mle/plant.hpp>

#include <json.hpp>

#include <Eigen/Dense>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mle {

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& node, const std::string& path) {
  if (!node.is_array() || node.empty())
    throw std::invalid_argument(path + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(node.size());
  if (!node[0].is_array() || node[0].empty())
    throw std::invalid_argument(path + "[0] must be a non-empty array of numbers");
  const auto cols = static_cast<Eigen::Index>(node[0].size());
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = node[static_cast<std::size_t>(i)];
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::invalid_argument(row_path + " must have " + std::to_string(cols) + " entries");
    for (Eigen::Index j = 0; j < cols; ++j) {
      const auto& cell = row[static_cast<std::size_t>(j)];
      if (!cell.is_number())
        throw std::invalid_argument(row_path + "[" + std::to_string(j) + "] must be a number");
      out(i, j) = cell.get<double>();
    }
  }
  return out;
}

inline void write_json_file(const nlohmann::json& root, const std::string& path) {
  auto out = csv::open_for_write(path);
  out << root.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline nlohmann::json read_json_file(const std::string& path) {
  auto in = csv::open_for_read(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& err) {
    throw std::runtime_error(std::string("'") + path + "': " + err.what());
  }
}

}  // namespace detail

/// {outputs, inputs, order, sample_period, coefficients: p rows of d(m+p)}.
inline nlohmann::json arx_to_json(const ArxModel& model) {
  nlohmann::json root;
  root["outputs"] = model.outputs();
  root["inputs"] = model.inputs();
  root["order"] = model.order();
  root["sample_period"] = model.sample_period();
  root["coefficients"] = detail::matrix_to_json(model.coefficients());
  return root;
}

inline ArxModel arx_from_json(const nlohmann::json& root, const std::string& path = "model") {
  if (!root.is_object()) throw std::invalid_argument(path + " must be a JSON object");
  for (const char* key : {"outputs", "inputs", "order", "sample_period", "coefficients"})
    if (!root.contains(key))
      throw std::invalid_argument(path + "." + key + " is missing");
  for (const char* key : {"outputs", "inputs", "order"})
    if (!root.at(key).is_number_integer())
      throw std::invalid_argument(path + "." + key + " must be an integer");
  const int outputs = root.at("outputs").get<int>();
  const int inputs = root.at("inputs").get<int>();
  const int order = root.at("order").get<int>();
  if (!root.at("sample_period").is_number())
    throw std::invalid_argument(path + ".sample_period must be a number");
  const double dt = root.at("sample_period").get<double>();
  const Eigen::MatrixXd coeffs =
      detail::matrix_from_json(root.at("coefficients"), path + ".coefficients");
  if (coeffs.rows() != outputs ||
      coeffs.cols() != static_cast<Eigen::Index>(order) * (outputs + inputs))
    throw std::invalid_argument(path + ".coefficients must be " + std::to_string(outputs) +
                                " x " + std::to_string(order * (outputs + inputs)));
  return ArxModel(outputs, inputs, order, dt, coeffs);
}

inline void save_arx(const ArxModel& model, const std::string& path) {
  detail::write_json_file(arx_to_json(model), path);
}

inline ArxModel load_arx(const std::string& path) {
  return arx_from_json(detail::read_json_file(path), "'" + path + "'");
}

/// {outputs, inputs, channels: p x m of {gain, time_constant, dead_time}}.
inline nlohmann::json transfer_matrix_to_json(const TransferMatrixModel& model) {
  nlohmann::json channels = nlohmann::json::array();
  for (int i = 0; i < model.outputs(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < model.inputs(); ++j) {
      const auto& ch = model.channel(i, j);
      row.push_back({{"gain", ch.gain},
                     {"time_constant", ch.time_constant},
                     {"dead_time", ch.dead_time}});
    }
    channels.push_back(std::move(row));
  }
  nlohmann::json root;
  root["outputs"] = model.outputs();
  root["inputs"] = model.inputs();
  root["channels"] = std::move(channels);
  return root;
}

/// Grid, per-fold losses (as configured plus both conventions -- with and
/// without the penalty term -- derived from the recorded ||DR||_1 norms), the
/// winner, and the size of the final correction; the corrected model itself is
/// written separately and referenced by file name.
inline nlohmann::json cv_report_to_json(const CvReport& report,
                                        const std::string& corrected_model_file) {
  nlohmann::json root;
  const std::size_t n = report.lambda_grid.size();
  root["lambda_grid"] = report.lambda_grid;
  root["loss_fold1"] = report.loss_fold1;
  root["loss_fold2"] = report.loss_fold2;
  root["penalty_in_loss"] = report.penalty_in_loss;
  std::vector<double> sum(n), bare(n), penalized(n);
  for (std::size_t i = 0; i < n; ++i) {
    sum[i] = report.loss_fold1[i] + report.loss_fold2[i];
    const double l1 = report.lambda_grid[i] * (report.l1_fold1[i] + report.l1_fold2[i]);
    bare[i] = report.penalty_in_loss ? sum[i] - l1 : sum[i];
    penalized[i] = bare[i] + l1;
  }
  root["loss_sum"] = std::move(sum);
  root["loss_sum_bare"] = std::move(bare);
  root["loss_sum_penalized"] = std::move(penalized);
  root["lambda_star"] = report.lambda_star;
  root["delta_r_l1_norm"] = report.final_estimate.delta_r.lpNorm<1>();
  root["rank_deficient"] = report.final_estimate.rank_deficient;
  root["corrected_model"] = corrected_model_file;
  root["warnings"] = report.warnings;
  return root;
}

/// Two columns, `t_min,value`, one row per sample of the curve.
inline void write_curve_csv(const ResponseCurve& curve, const std::string& path) {
  auto out = csv::open_for_write(path);
  out << "t_min,value\n";
  for (Eigen::Index k = 0; k < curve.values.size(); ++k)
    out << csv::format_double(static_cast<double>(k) * curve.sample_period) << ','
        << csv::format_double(curve.values[k]) << "\n";
  if (!out) throw std::runtime_error("write_curve_csv: failed writing '" + path + "'");
}

/// Two columns, `lambda,error`, one row per sweep point.
inline void write_sweep_csv(const std::vector<SweepPoint>& sweep, const std::string& path) {
  auto out = csv::open_for_write(path);
  out << "lambda,error\n";
  for (const auto& point : sweep)
    out << csv::format_double(point.lambda) << ',' << csv::format_double(point.error) << "\n";
  if (!out) throw std::runtime_error("write_sweep_csv: failed writing '" + path + "'");
}

}  // namespace mle
