#pragma once

// Open-loop model comparison benchmarks.
//
// Models are compared channel by channel on sampled step responses:
//
//     E = sum_{i,j} sum_{k=0}^{N} (phi_k^{true,ij} - phi_k^{cand,ij})^2,
//
// with truth curves sampled from the analytic first-order formulas and
// candidate curves either analytic (transfer-matrix candidates) or free-run
// (lagged-predictor candidates).  Static gains are read from the settled tail
// of step curves and transport delays from the magnitude peak of impulse
// curves (the magnitude handles negative-gain channels).

#include <mle/arx.hpp>
#include <mle/estimation.hpp>
#include <mle/plant.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mle {

enum class ResponseKind { step, impulse };

/// One sampled response curve phi_0..phi_N for a single (output, input) pair.
struct ResponseCurve {
  Eigen::VectorXd values;
  double sample_period = 0.0;  ///< minutes
  int output_index = 0;
  int input_index = 0;
  ResponseKind kind = ResponseKind::step;
};

/// Channel-by-channel squared step-response differences.
struct BenchmarkResult {
  double error = 0.0;              ///< E: sum of all contributions
  Eigen::MatrixXd contributions;   ///< p x m, indexed (output, input)
  double horizon = 0.0;            ///< minutes
  double sample_period = 0.0;      ///< minutes
};

namespace detail {

inline Eigen::Index benchmark_samples(double horizon_minutes, double sample_period,
                                      const char* who) {
  if (!(sample_period > 0.0))
    throw std::invalid_argument(std::string(who) + ": sample period must be > 0");
  if (!(horizon_minutes > 0.0))
    throw std::invalid_argument(std::string(who) + ": horizon must be > 0");
  const auto n = std::llround(horizon_minutes / sample_period);
  if (n < 1 || std::abs(static_cast<double>(n) * sample_period - horizon_minutes) > 1e-9)
    throw std::invalid_argument(std::string(who) +
                                ": horizon must be a multiple of the sample period");
  return n;
}

inline Eigen::VectorXd analytic_curve(const FopdtChannel& channel, ResponseKind kind,
                                      Eigen::Index samples, double sample_period) {
  Eigen::VectorXd values(samples + 1);
  for (Eigen::Index k = 0; k <= samples; ++k) {
    const double t = static_cast<double>(k) * sample_period;
    values[k] = kind == ResponseKind::step ? analytic_step_response(channel, t)
                                           : analytic_impulse_response(channel, t);
  }
  return values;
}

}  // namespace detail

/// Samples one analytic channel response at dt = sample_period.
inline ResponseCurve sample_response(const TransferMatrixModel& model, int output, int input,
                                     ResponseKind kind, double horizon_minutes,
                                     double sample_period = 0.2) {
  if (output < 0 || output >= model.outputs() || input < 0 || input >= model.inputs())
    throw std::invalid_argument("sample_response: channel index out of range");
  const Eigen::Index n =
      detail::benchmark_samples(horizon_minutes, sample_period, "sample_response");
  return ResponseCurve{detail::analytic_curve(model.channel(output, input), kind, n,
                                              sample_period),
                       sample_period, output, input, kind};
}

/// Free-run response of a lagged predictor.  Impulse curves are the first
/// difference of the step divided by the sample period (a unit-area pulse), so
/// they plot on the same scale as the analytic impulse response.
inline ResponseCurve sample_response(const ArxModel& model, int output, int input,
                                     ResponseKind kind, double horizon_minutes) {
  if (output < 0 || output >= model.outputs() || input < 0 || input >= model.inputs())
    throw std::invalid_argument("sample_response: channel index out of range");
  const Eigen::Index n =
      detail::benchmark_samples(horizon_minutes, model.sample_period(), "sample_response");
  const Eigen::MatrixXd curves = kind == ResponseKind::step
                                     ? model.step_responses(input, static_cast<int>(n))
                                     : model.impulse_responses(input, static_cast<int>(n));
  Eigen::VectorXd values = curves.row(output).transpose();
  if (kind == ResponseKind::impulse) values /= model.sample_period();
  return ResponseCurve{std::move(values), model.sample_period(), output, input, kind};
}

namespace detail {

inline BenchmarkResult assemble_benchmark(const TransferMatrixModel& truth,
                                          const std::vector<Eigen::MatrixXd>& candidate_steps,
                                          Eigen::Index samples, double sample_period,
                                          double horizon_minutes) {
  BenchmarkResult result;
  result.horizon = horizon_minutes;
  result.sample_period = sample_period;
  result.contributions = Eigen::MatrixXd::Zero(truth.outputs(), truth.inputs());
  for (int j = 0; j < truth.inputs(); ++j)
    for (int i = 0; i < truth.outputs(); ++i) {
      const Eigen::VectorXd reference =
          analytic_curve(truth.channel(i, j), ResponseKind::step, samples, sample_period);
      result.contributions(i, j) =
          (reference - candidate_steps[static_cast<std::size_t>(j)].row(i).transpose())
              .squaredNorm();
    }
  result.error = result.contributions.sum();
  return result;
}

}  // namespace detail

/// Squared step-response differences, both models sampled analytically.
inline BenchmarkResult step_benchmark(const TransferMatrixModel& truth,
                                      const TransferMatrixModel& candidate,
                                      double horizon_minutes, double sample_period = 0.2) {
  if (truth.outputs() != candidate.outputs() || truth.inputs() != candidate.inputs())
    throw std::invalid_argument("step_benchmark: models disagree on shape");
  const Eigen::Index n =
      detail::benchmark_samples(horizon_minutes, sample_period, "step_benchmark");
  std::vector<Eigen::MatrixXd> steps;
  steps.reserve(static_cast<std::size_t>(truth.inputs()));
  for (int j = 0; j < truth.inputs(); ++j) {
    Eigen::MatrixXd table(truth.outputs(), n + 1);
    for (int i = 0; i < truth.outputs(); ++i)
      table.row(i) = detail::analytic_curve(candidate.channel(i, j), ResponseKind::step, n,
                                            sample_period)
                         .transpose();
    steps.push_back(std::move(table));
  }
  return detail::assemble_benchmark(truth, steps, n, sample_period, horizon_minutes);
}

/// Squared step-response differences against a lagged predictor's free run.
inline BenchmarkResult step_benchmark(const TransferMatrixModel& truth,
                                      const ArxModel& candidate, double horizon_minutes,
                                      double sample_period = 0.2) {
  if (truth.outputs() != candidate.outputs() || truth.inputs() != candidate.inputs())
    throw std::invalid_argument("step_benchmark: models disagree on shape");
  if (std::abs(candidate.sample_period() - sample_period) > 1e-12)
    throw std::invalid_argument("step_benchmark: candidate model is sampled at " +
                                std::to_string(candidate.sample_period()) +
                                " min, benchmark runs at " + std::to_string(sample_period) +
                                " min");
  const Eigen::Index n =
      detail::benchmark_samples(horizon_minutes, sample_period, "step_benchmark");
  std::vector<Eigen::MatrixXd> steps;
  steps.reserve(static_cast<std::size_t>(truth.inputs()));
  for (int j = 0; j < truth.inputs(); ++j)
    steps.push_back(candidate.step_responses(j, static_cast<int>(n)));
  return detail::assemble_benchmark(truth, steps, n, sample_period, horizon_minutes);
}

/// Squared step-response differences between two lagged predictors on a
/// shared sample grid.
inline BenchmarkResult step_benchmark(const ArxModel& truth, const ArxModel& candidate,
                                      double horizon_minutes) {
  if (truth.outputs() != candidate.outputs() || truth.inputs() != candidate.inputs())
    throw std::invalid_argument("step_benchmark: models disagree on shape");
  if (std::abs(candidate.sample_period() - truth.sample_period()) > 1e-12)
    throw std::invalid_argument("step_benchmark: candidate model is sampled at " +
                                std::to_string(candidate.sample_period()) +
                                " min, benchmark runs at " + std::to_string(truth.sample_period()) +
                                " min");
  const Eigen::Index n =
      detail::benchmark_samples(horizon_minutes, truth.sample_period(), "step_benchmark");
  BenchmarkResult result;
  result.horizon = horizon_minutes;
  result.sample_period = truth.sample_period();
  result.contributions = Eigen::MatrixXd::Zero(truth.outputs(), truth.inputs());
  for (int j = 0; j < truth.inputs(); ++j) {
    const Eigen::MatrixXd reference = truth.step_responses(j, static_cast<int>(n));
    const Eigen::MatrixXd candidate_steps = candidate.step_responses(j, static_cast<int>(n));
    for (int i = 0; i < truth.outputs(); ++i)
      result.contributions(i, j) =
          (reference.row(i) - candidate_steps.row(i)).squaredNorm();
  }
  result.error = result.contributions.sum();
  return result;
}

/// Static gain: mean of the last 5% of a settled step curve (at least one
/// sample, rounding the 5% up).
inline double final_gain(const ResponseCurve& curve) {
  if (curve.kind != ResponseKind::step)
    throw std::invalid_argument("final_gain: needs a step curve");
  const Eigen::Index n = curve.values.size();
  if (n < 1) throw std::invalid_argument("final_gain: empty curve");
  const Eigen::Index tail = n - (19 * n) / 20;
  return curve.values.tail(tail).mean();
}

/// Transport delay: time of the maximum-magnitude impulse sample, earliest
/// index on ties.
inline double peak_delay(const ResponseCurve& curve) {
  if (curve.kind != ResponseKind::impulse)
    throw std::invalid_argument("peak_delay: needs an impulse curve");
  if (curve.values.size() < 1) throw std::invalid_argument("peak_delay: empty curve");
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < curve.values.size(); ++k)
    if (std::abs(curve.values[k]) > std::abs(curve.values[best])) best = k;
  return static_cast<double>(best) * curve.sample_period;
}

/// One benchmark point per lambda: fit the residual correction on the merged
/// dataset, then score the corrected model against the truth.
struct SweepPoint {
  double lambda = 0.0;
  double error = 0.0;
};

inline std::vector<SweepPoint> lambda_sweep(const TransferMatrixModel& truth,
                                            const RegressionDataset& d1,
                                            const RegressionDataset& d2, const ArxModel& base,
                                            const std::vector<double>& grid,
                                            double horizon_minutes = 100.0,
                                            const EstimateOptions& options = {}) {
  detail::check_dataset_against(d1, base, "lambda_sweep");
  detail::check_dataset_against(d2, base, "lambda_sweep");
  detail::check_lambda_grid(grid, "lambda_sweep");
  if (truth.outputs() != base.outputs() || truth.inputs() != base.inputs())
    throw std::invalid_argument("lambda_sweep: truth and base model disagree on shape");

  const RegressionDataset merged = merge(d1, d2);
  const std::vector<Eigen::MatrixXd> deltas =
      detail::mismatch_path(merged, base, grid, options, "lambda_sweep");
  std::vector<SweepPoint> sweep;
  sweep.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const ArxModel corrected(base.outputs(), base.inputs(), base.order(), base.sample_period(),
                             base.coefficients() + deltas[i]);
    sweep.push_back(SweepPoint{grid[i], step_benchmark(truth, corrected, horizon_minutes,
                                                       base.sample_period())
                                            .error});
  }
  return sweep;
}

}  // namespace mle
