#pragma once

// Unconstrained multivariable MPC over input-rate moves.
//
// Every control period the controller reads the measured outputs, refreshes a
// constant output-disturbance (bias) estimate, predicts H_p periods ahead
// with its internal plant model, and picks rate moves Du_1..Du_{H_c}
// minimizing
//
//     J = sum_{i=1}^{H_p} (r - y_pred_i)' Qy (r - y_pred_i)
//       + sum_{j=1}^{H_c} Du_j' Qu Du_j.
//
// Timing convention: the move decided from the measurement at l dtc takes
// effect one period later, so the input over [l, l+1) dtc is u_l and Du_1
// first shows up in the prediction for period 2.  The internal model
// integrates in `substeps` sub-steps per control period, so dead times only
// need to be commensurate with the finer grid, not with dtc itself.

#include <mle/plant.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mle {

struct MpcConfig {
  int prediction_horizon = 30;        ///< H_p, in control periods
  int control_horizon = 5;            ///< H_c, in control periods
  Eigen::MatrixXd output_weight;      ///< Q_y, p x p symmetric PSD
  Eigen::MatrixXd input_rate_weight;  ///< Q_u, m x m symmetric PSD
  double control_period = 1.0;        ///< dtc, minutes
  int substeps = 5;                   ///< internal integration steps per period
};

namespace detail {

inline void check_weight(const Eigen::MatrixXd& w, Eigen::Index dim, const char* name) {
  if (w.rows() != dim || w.cols() != dim)
    throw std::invalid_argument(std::string("MpcController: ") + name +
                                " must be square with one row per channel");
  const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument(std::string("MpcController: ") + name + " must be symmetric");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-12 * scale)
    throw std::invalid_argument(std::string("MpcController: ") + name +
                                " must be positive semidefinite");
}

inline MpcConfig validated_mpc_config(MpcConfig config, int outputs, int inputs) {
  if (config.control_horizon < 1 || config.prediction_horizon <= config.control_horizon)
    throw std::invalid_argument(
        "MpcController: horizons must satisfy prediction > control >= 1");
  if (!(config.control_period > 0.0) || !std::isfinite(config.control_period))
    throw std::invalid_argument("MpcController: control period must be positive");
  if (config.substeps < 1)
    throw std::invalid_argument("MpcController: need at least one integration substep");
  check_weight(config.output_weight, outputs, "output weight");
  check_weight(config.input_rate_weight, inputs, "input rate weight");
  return config;
}

/// Step-response blocks of `model` at multiples of the control period:
/// blocks[k](i, j) is the response of output i at t = k dtc to a unit step on
/// input j applied from t = 0, so blocks[0] is zero.
inline std::vector<Eigen::MatrixXd> step_blocks(const TransferMatrixModel& model, int count,
                                                double control_period, int substeps) {
  std::vector<Eigen::MatrixXd> blocks(
      static_cast<std::size_t>(count), Eigen::MatrixXd::Zero(model.outputs(), model.inputs()));
  for (int j = 0; j < model.inputs(); ++j) {
    PlantSimulator sim(model, control_period / substeps);
    const Eigen::VectorXd u = Eigen::VectorXd::Unit(model.inputs(), j);
    for (int k = 1; k < count; ++k) {
      for (int s = 0; s < substeps; ++s) sim.advance(u);
      blocks[static_cast<std::size_t>(k)].col(j) = sim.output();
    }
  }
  return blocks;
}

/// Quadratic solver for the stacked rate-move problem.  steps[k] maps a move
/// to an output k periods after the move takes effect, so the dynamic matrix
/// has block (i, j) = steps[i - j] for i >= j (0-based block indices) and the
/// normal matrix is factored once at construction.  Unlike the controller
/// configuration this accepts horizon == moves; the one-step hand examples
/// live there.
class RateMoveQp {
 public:
  RateMoveQp(const std::vector<Eigen::MatrixXd>& steps, int horizon, int moves,
             const Eigen::MatrixXd& output_weight, const Eigen::MatrixXd& rate_weight)
      : horizon_(horizon), moves_(moves) {
    if (horizon_ < 1 || moves_ < 1 || moves_ > horizon_)
      throw std::invalid_argument("RateMoveQp: need horizon >= moves >= 1");
    if (static_cast<int>(steps.size()) < horizon_)
      throw std::invalid_argument("RateMoveQp: need one step block per horizon period");
    p_ = static_cast<int>(steps.front().rows());
    m_ = static_cast<int>(steps.front().cols());
    dynamic_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p_) * horizon_,
                                     static_cast<Eigen::Index>(m_) * moves_);
    weighted_.resizeLike(dynamic_);
    for (int i = 0; i < horizon_; ++i)
      for (int j = 0; j <= i && j < moves_; ++j) {
        const auto& block = steps[static_cast<std::size_t>(i - j)];
        if (block.rows() != p_ || block.cols() != m_)
          throw std::invalid_argument("RateMoveQp: step blocks must share one shape");
        dynamic_.block(static_cast<Eigen::Index>(i) * p_, static_cast<Eigen::Index>(j) * m_,
                       p_, m_) = block;
      }
    for (int i = 0; i < horizon_; ++i)
      weighted_.middleRows(static_cast<Eigen::Index>(i) * p_, p_) =
          output_weight * dynamic_.middleRows(static_cast<Eigen::Index>(i) * p_, p_);
    normal_ = dynamic_.transpose() * weighted_;
    for (int j = 0; j < moves_; ++j)
      normal_.block(static_cast<Eigen::Index>(j) * m_, static_cast<Eigen::Index>(j) * m_, m_,
                    m_) += rate_weight;
    ldlt_.compute(normal_);
  }

  int horizon() const { return horizon_; }
  int moves() const { return moves_; }

  /// Minimizing stacked rate moves for stacked per-period errors r - y_free.
  Eigen::VectorXd solve(const Eigen::VectorXd& errors) const {
    if (errors.size() != static_cast<Eigen::Index>(p_) * horizon_)
      throw std::invalid_argument("RateMoveQp::solve: error vector has wrong length");
    return ldlt_.solve(weighted_.transpose() * errors);
  }

  /// Infinity norm of the gradient of J at `moves`; zero at the exact optimum.
  double gradient_residual(const Eigen::VectorXd& moves, const Eigen::VectorXd& errors) const {
    return 2.0 *
           (normal_ * moves - weighted_.transpose() * errors).lpNorm<Eigen::Infinity>();
  }

 private:
  int p_ = 0, m_ = 0;
  int horizon_, moves_;
  Eigen::MatrixXd dynamic_;   // S
  Eigen::MatrixXd weighted_;  // blockdiag(Qy) S
  Eigen::MatrixXd normal_;    // S' Qy S + blockdiag(Qu)
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

}  // namespace detail

/**
 * @brief Receding-horizon controller around a fixed internal plant model.
 *
 * The internal model never changes during a run; mismatch between it and the
 * real plant is absorbed by the bias estimate, which makes constant-reference
 * tracking offset-free.  One instance drives one closed loop.
 */
class MpcController {
 public:
  MpcController(const TransferMatrixModel& initial_model, const MpcConfig& config)
      : config_(detail::validated_mpc_config(config, initial_model.outputs(),
                                             initial_model.inputs())),
        p_(initial_model.outputs()),
        m_(initial_model.inputs()),
        sim_(initial_model, config_.control_period / config_.substeps),
        qp_(detail::step_blocks(initial_model, config_.prediction_horizon,
                                config_.control_period, config_.substeps),
            config_.prediction_horizon, config_.control_horizon, config_.output_weight,
            config_.input_rate_weight),
        input_(Eigen::VectorXd::Zero(m_)),
        bias_(Eigen::VectorXd::Zero(p_)) {}

  int outputs() const { return p_; }
  int inputs() const { return m_; }
  const MpcConfig& config() const { return config_; }
  /// The most recently committed input u_l (zero before the first step).
  const Eigen::VectorXd& input() const { return input_; }
  /// Current constant output-disturbance estimate.
  const Eigen::VectorXd& bias() const { return bias_; }
  /// Gradient norm of the quadratic at the last returned move sequence.
  double last_gradient_residual() const { return last_gradient_residual_; }

  /// Bias-corrected model predictions for periods 1..H_p under the rate
  /// moves (one column per control-horizon period, held constant after H_c).
  /// Column i-1 is the prediction for period i; a move in column j first
  /// affects period j+2, one period after the move is committed.
  Eigen::MatrixXd predict_horizon(const Eigen::Ref<const Eigen::MatrixXd>& rate_moves) const {
    if (rate_moves.rows() != m_ || rate_moves.cols() != config_.control_horizon)
      throw std::invalid_argument(
          "MpcController::predict_horizon: need exactly one rate move per control-horizon "
          "period");
    PlantSimulator rollout = sim_;
    Eigen::VectorXd held = input_;
    Eigen::MatrixXd predictions(p_, config_.prediction_horizon);
    for (int i = 1; i <= config_.prediction_horizon; ++i) {
      if (i >= 2 && i - 1 <= config_.control_horizon) held += rate_moves.col(i - 2);
      for (int s = 0; s < config_.substeps; ++s) rollout.advance(held);
      predictions.col(i - 1) = rollout.output() + bias_;
    }
    return predictions;
  }

  /// One control period: refresh the bias from the measurement, solve for the
  /// optimal rate moves, commit the first one, and advance the internal model
  /// across the period just starting (which still runs under the old input).
  /// Returns the committed input, to be applied from the next period on.
  const Eigen::VectorXd& control_step(const Eigen::Ref<const Eigen::VectorXd>& y_measured,
                                      const Eigen::Ref<const Eigen::VectorXd>& r_setpoint) {
    if (y_measured.size() != p_ || r_setpoint.size() != p_)
      throw std::invalid_argument(
          "MpcController::control_step: measurement and setpoint must have one entry per "
          "output");
    bias_ = y_measured - sim_.output();

    PlantSimulator rollout = sim_;
    Eigen::VectorXd errors(static_cast<Eigen::Index>(p_) * config_.prediction_horizon);
    for (int i = 0; i < config_.prediction_horizon; ++i) {
      for (int s = 0; s < config_.substeps; ++s) rollout.advance(input_);
      errors.segment(static_cast<Eigen::Index>(i) * p_, p_) =
          r_setpoint - rollout.output() - bias_;
    }

    const Eigen::VectorXd moves = qp_.solve(errors);
    last_gradient_residual_ = qp_.gradient_residual(moves, errors);
    if (!(last_gradient_residual_ <=
          1e-6 * std::max(1.0, errors.lpNorm<Eigen::Infinity>())))
      throw std::runtime_error(
          "MpcController::control_step: rate-move normal equations did not solve; is the "
          "input rate weight positive definite?");

    for (int s = 0; s < config_.substeps; ++s) sim_.advance(input_);
    input_ += moves.head(m_);
    return input_;
  }

 private:
  MpcConfig config_;
  int p_;
  int m_;
  PlantSimulator sim_;  // internal prediction model, advanced in lockstep
  detail::RateMoveQp qp_;
  Eigen::VectorXd input_;
  Eigen::VectorXd bias_;
  double last_gradient_residual_ = 0.0;
};

}  // namespace mle
