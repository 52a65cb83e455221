#pragma once

// Multivariable ARX predictors and the excitation-based model conversion.
//
// The model is the one-step-ahead predictor
//
//     y[k+1] = R h[k],   h[k] = [y[k]; u[k]; y[k-1]; u[k-1]; ...],
//
// with R a p x d(m+p) coefficient matrix over d lag blocks ordered newest
// first.  Responses are read at the sample instants: curve[k] is the value at
// t = k dt with the input switched on during [0, dt), so curve[0] is always 0
// for this strictly causal structure and the curves line up sample-for-sample
// with the analytic plant responses.
//
// convert_from_plant drives a noise-free plant simulation with white Gaussian
// excitation and fits R row-wise on the lagged data.  A ZOH FOPDT grid is
// representable exactly once the order covers its dead times, but for the
// same reason the noise-free design is exactly rank deficient: every output
// lag reproduces the plant recursion in terms of other columns, and penalised
// fits gravitate towards blends of those shift identities that interpolate
// perfectly yet free-run unstably.  The conversion therefore selects the
// support by backward elimination from the minimum-norm least-squares
// interpolant - the lambda -> 0 limit of the L1 path - discarding
// coefficients below the floor max(lambda0, 1% of the row peak) and refitting
// on the survivors while the refit still interpolates the data.

#include <mle/lasso.hpp>
#include <mle/plant.hpp>
#include <mle/rng.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mle {

class ArxModel {
 public:
  ArxModel(int outputs, int inputs, int order, double sample_period,
           Eigen::MatrixXd coefficients)
      : outputs_(outputs),
        inputs_(inputs),
        order_(order),
        sample_period_(sample_period),
        coefficients_(std::move(coefficients)) {
    if (outputs_ < 1 || inputs_ < 1) throw std::invalid_argument("ArxModel: empty dimensions");
    if (order_ < 1) throw std::invalid_argument("ArxModel: order must be >= 1");
    if (!(sample_period_ > 0.0))
      throw std::invalid_argument("ArxModel: sample period must be positive");
    if (coefficients_.rows() != outputs_ || coefficients_.cols() != history_size())
      throw std::invalid_argument("ArxModel: coefficient matrix must be outputs x order*(outputs+inputs)");
  }

  int outputs() const { return outputs_; }
  int inputs() const { return inputs_; }
  int order() const { return order_; }
  double sample_period() const { return sample_period_; }
  int history_size() const { return order_ * (outputs_ + inputs_); }
  const Eigen::MatrixXd& coefficients() const { return coefficients_; }

  /// R h for one stacked history vector (newest lag first).
  Eigen::VectorXd one_step_predict(const Eigen::Ref<const Eigen::VectorXd>& history) const {
    if (history.size() != history_size())
      throw std::invalid_argument("ArxModel::one_step_predict: history has wrong length");
    return coefficients_ * history;
  }

  /// Free-running simulation: predictions are fed back as the y entries of
  /// subsequent histories.  inputs is m x N; the returned p x N block holds
  /// the response one step after each input column, i.e. column t is the
  /// output at sample t+1.
  Eigen::MatrixXd free_run(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                           const Eigen::Ref<const Eigen::VectorXd>& initial_history) const {
    if (inputs.rows() != inputs_)
      throw std::invalid_argument("ArxModel::free_run: inputs must have one row per input");
    if (initial_history.size() != history_size())
      throw std::invalid_argument("ArxModel::free_run: initial history has wrong length");

    const int block = outputs_ + inputs_;
    Eigen::VectorXd h = initial_history;
    Eigen::VectorXd y = coefficients_ * h;  // output at the first simulated instant
    Eigen::MatrixXd out(outputs_, inputs.cols());
    for (Eigen::Index t = 0; t < inputs.cols(); ++t) {
      // shift one lag block to the right (backward copy: regions overlap)
      for (Eigen::Index i = h.size() - 1; i >= block; --i) h[i] = h[i - block];
      h.head(outputs_) = y;
      h.segment(outputs_, inputs_) = inputs.col(t);
      y = coefficients_ * h;
      out.col(t) = y;
    }
    return out;
  }

  Eigen::MatrixXd free_run(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const {
    return free_run(inputs, Eigen::VectorXd::Zero(history_size()));
  }

  /// Step responses of every output to a unit step on one input (zero initial
  /// history, step applied from the first sample interval).  Returns
  /// p x (samples+1); column k is the response at t = k dt, column 0 is zero.
  Eigen::MatrixXd step_responses(int input, int samples) const {
    check_input(input);
    if (samples < 0) throw std::invalid_argument("ArxModel::step_responses: samples < 0");
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(inputs_, samples);
    u.row(input).setOnes();
    Eigen::MatrixXd curves = Eigen::MatrixXd::Zero(outputs_, samples + 1);
    if (samples > 0) curves.rightCols(samples) = free_run(u);
    return curves;
  }

  /// Responses to a discrete unit pulse (input = 1 over the first sample
  /// interval only).  By linearity this is exactly the first difference of
  /// step_responses, which is how it is computed.
  Eigen::MatrixXd impulse_responses(int input, int samples) const {
    Eigen::MatrixXd curves = step_responses(input, samples);
    for (Eigen::Index k = curves.cols() - 1; k >= 1; --k) curves.col(k) -= curves.col(k - 1);
    return curves;
  }

  /// Single-channel step response, values at t = 0, dt, ..., samples*dt.
  std::vector<double> step_response(int input, int output, int samples) const {
    check_output(output);
    const Eigen::MatrixXd curves = step_responses(input, samples);
    return {curves.row(output).begin(), curves.row(output).end()};
  }

  std::vector<double> impulse_response(int input, int output, int samples) const {
    check_output(output);
    const Eigen::MatrixXd curves = impulse_responses(input, samples);
    return {curves.row(output).begin(), curves.row(output).end()};
  }

 private:
  void check_input(int input) const {
    if (input < 0 || input >= inputs_)
      throw std::invalid_argument("ArxModel: input index out of range");
  }
  void check_output(int output) const {
    if (output < 0 || output >= outputs_)
      throw std::invalid_argument("ArxModel: output index out of range");
  }

  int outputs_;
  int inputs_;
  int order_;
  double sample_period_;
  Eigen::MatrixXd coefficients_;
};

namespace detail {

/// Column t of a lag-regression design: [y[k-1]; u[k-1]; ...; y[k-d]; u[k-d]]
/// for target sample k.  y is p x (T+1), u is m x T' with T' >= k.
inline void fill_history_column(Eigen::Ref<Eigen::VectorXd> column, const Eigen::MatrixXd& y,
                                const Eigen::MatrixXd& u, Eigen::Index k, int order) {
  const Eigen::Index p = y.rows(), m = u.rows();
  for (int lag = 1; lag <= order; ++lag) {
    const Eigen::Index row = static_cast<Eigen::Index>(lag - 1) * (p + m);
    column.segment(row, p) = y.col(k - lag);
    column.segment(row + p, m) = u.col(k - lag);
  }
}

/// Minimum-norm least squares for one target of a gram system restricted to a
/// feature subset; returns the coefficients of the kept features in order.
inline Eigen::VectorXd restricted_least_squares(const LassoGram& gram, int target,
                                                const std::vector<Eigen::Index>& keep) {
  const auto n = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd g(n, n);
  Eigen::VectorXd c(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    c[a] = gram.corr(keep[static_cast<std::size_t>(a)], target);
    for (Eigen::Index b = 0; b < n; ++b)
      g(a, b) = gram.gram(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(b)]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  const double threshold = es.eigenvalues().cwiseAbs().maxCoeff() * 1e-12;
  Eigen::VectorXd projected = es.eigenvectors().transpose() * c;
  for (Eigen::Index i = 0; i < n; ++i)
    projected[i] = es.eigenvalues()[i] > threshold ? projected[i] / es.eigenvalues()[i] : 0.0;
  return es.eigenvectors() * projected;
}

/// Mean squared one-step residual of beta relative to the target power.
inline double relative_residual(const LassoGram& gram, int target, const Eigen::VectorXd& beta) {
  const double power = gram.target_sq_mean[target];
  if (!(power > 0.0)) return 0.0;
  const Eigen::VectorXd q = gram.gram.selfadjointView<Eigen::Lower>() * beta;
  return std::max(0.0, 2.0 * moment_objective(gram, target, beta, q, 0.0)) / power;
}

}  // namespace detail

struct ConversionConfig {
  double excitation_duration = 10000.0;  ///< minutes of excitation data
  double excitation_variance = 1.0;      ///< per input channel
  double sample_period = 0.2;            ///< minutes
  int order = 150;                       ///< lag depth d
  double lambda0 = 1e-6;                 ///< sparsity floor, standardized units
  std::uint64_t seed = 1;                ///< excitation substream master seed
};

/// Converts a transfer-matrix model to an ARX predictor: simulates the model
/// (noise-free) under i.i.d. Gaussian excitation and fits each coefficient
/// row as a sparse interpolant of the lagged data, eliminating backwards from
/// the minimum-norm least-squares solution (see the file comment).  A row
/// whose coefficients all fall below lambda0 shrinks to zero.
inline ArxModel convert_from_plant(const TransferMatrixModel& model,
                                   const ConversionConfig& config) {
  if (!(config.excitation_duration > 0.0) || !(config.excitation_variance >= 0.0) ||
      !(config.sample_period > 0.0) || config.order < 1 || !(config.lambda0 > 0.0))
    throw std::invalid_argument("convert_from_plant: invalid configuration");

  const int p = model.outputs(), m = model.inputs(), d = config.order;
  const auto n0 = static_cast<Eigen::Index>(
      std::llround(config.excitation_duration / config.sample_period));
  if (n0 <= d)
    throw std::invalid_argument(
        "convert_from_plant: excitation shorter than the requested lag depth");

  // Excitation and noise-free plant response.
  GaussianStream excitation(substream_seed(config.seed, "excitation"));
  const double stddev = std::sqrt(config.excitation_variance);
  Eigen::MatrixXd u(m, n0);
  for (Eigen::Index k = 0; k < n0; ++k)
    for (int j = 0; j < m; ++j) u(j, k) = excitation.next(stddev);

  PlantSimulator sim(model, config.sample_period);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(p, n0 + 1);
  for (Eigen::Index k = 0; k < n0; ++k) y.col(k + 1) = sim.advance(u.col(k));

  // Lagged design over target samples k = d .. n0.
  const Eigen::Index columns = n0 - d + 1;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d) * (p + m), columns);
  Eigen::MatrixXd targets(p, columns);
  for (Eigen::Index t = 0; t < columns; ++t) {
    const Eigen::Index k = d + t;
    detail::fill_history_column(x.col(t), y, u, k, d);
    targets.col(t) = y.col(k);
  }

  const auto gram = detail::LassoGram::build(x, targets, /*standardize=*/true);
  Eigen::MatrixXd coefficients(p, x.rows());
  for (int row = 0; row < p; ++row) {
    Eigen::VectorXd beta = detail::least_squares_gram(gram, row).beta;
    // Each accepted refit can only keep fitting within the guard, and its
    // support is strictly contained in the previous one, so the elimination
    // terminates after at most x.rows() rounds.
    const double guard = std::max(1e-12, 2.0 * detail::relative_residual(gram, row, beta));
    std::vector<Eigen::Index> keep, previous;
    for (Eigen::Index round = 0; round <= x.rows(); ++round) {
      const double floor = std::max(config.lambda0, 1e-2 * beta.cwiseAbs().maxCoeff());
      keep.clear();
      for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (std::abs(beta[j]) > floor) keep.push_back(j);
      if (keep.empty()) {
        beta.setZero();
        break;
      }
      if (keep == previous) break;
      const Eigen::VectorXd refit = detail::restricted_least_squares(gram, row, keep);
      Eigen::VectorXd candidate = Eigen::VectorXd::Zero(beta.size());
      for (Eigen::Index j = 0; j < refit.size(); ++j)
        candidate[keep[static_cast<std::size_t>(j)]] = refit[j];
      if (detail::relative_residual(gram, row, candidate) > guard) break;
      beta = std::move(candidate);
      previous = keep;
    }
    coefficients.row(row) = beta.cwiseQuotient(gram.scale).transpose();
  }
  return ArxModel(p, m, d, config.sample_period, std::move(coefficients));
}

}  // namespace mle
