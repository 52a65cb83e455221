#pragma once

// Closed-loop simulation of an MPC controller against a (possibly different)
// true plant, with seeded measurement noise and a reference step schedule.
//
// The plant integrates on the fine sample grid dt; the controller acts every
// control period dtc = per * dt, reading the noisy output.  An input the
// controller commits at one control instant takes effect at the next, so u is
// piecewise constant over control periods and the record's u.col(k) is the
// value actually held over [k dt, (k+1) dt).

#include <mle/mpc.hpp>
#include <mle/plant.hpp>
#include <mle/record.hpp>
#include <mle/rng.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace mle {

struct ClosedLoopConfig {
  double sample_period = 0.2;    ///< dt, minutes
  double horizon = 1000.0;       ///< run length T, minutes
  double noise_variance = 0.001; ///< per output channel, per sample
  std::uint64_t seed = 1;        ///< master seed; noise uses a named substream
  std::uint64_t noise_substream = 0;  ///< distinguishes runs sharing a master seed
};

/// Runs `controller_model`-based MPC against `true_plant`.  The two models
/// normally differ: the controller keeps believing its design model while the
/// record captures how the mismatched loop actually behaves.
inline SimulationRecord run_closed_loop(const TransferMatrixModel& true_plant,
                                        const TransferMatrixModel& controller_model,
                                        const MpcConfig& mpc,
                                        const ReferenceSchedule& references,
                                        const ClosedLoopConfig& config) {
  if (true_plant.outputs() != controller_model.outputs() ||
      true_plant.inputs() != controller_model.inputs())
    throw std::invalid_argument("run_closed_loop: plant and controller model disagree on shape");
  if (references.outputs() != true_plant.outputs())
    throw std::invalid_argument("run_closed_loop: reference schedule has wrong output count");
  if (!(config.sample_period > 0.0) || !(config.horizon > 0.0))
    throw std::invalid_argument("run_closed_loop: sample period and horizon must be positive");
  if (!(config.noise_variance >= 0.0))
    throw std::invalid_argument("run_closed_loop: noise variance must be >= 0");
  if (mpc.control_period < config.sample_period - 1e-9)
    throw std::invalid_argument("run_closed_loop: control period must be >= the sample period");
  const auto per = std::llround(mpc.control_period / config.sample_period);
  if (std::abs(mpc.control_period - static_cast<double>(per) * config.sample_period) > 1e-9)
    throw std::invalid_argument(
        "run_closed_loop: control period must be an integer number of samples");

  const int p = true_plant.outputs(), m = true_plant.inputs();
  const auto n = std::llround(config.horizon / config.sample_period);
  if (n < 1) throw std::invalid_argument("run_closed_loop: horizon shorter than one sample");

  PlantSimulator plant(true_plant, config.sample_period);
  MpcController controller(controller_model, mpc);
  GaussianStream noise(substream_seed(config.seed, "noise", config.noise_substream));
  const double stddev = std::sqrt(config.noise_variance);

  SimulationRecord record;
  record.sample_period = config.sample_period;
  record.seed = config.seed;
  record.time.resize(n + 1);
  record.u.resize(m, n + 1);
  record.y_measured.resize(p, n + 1);
  record.y_clean.resize(p, n + 1);
  record.r.resize(p, n + 1);

  Eigen::VectorXd applied = Eigen::VectorXd::Zero(m);    // active this period
  Eigen::VectorXd committed = applied;                   // takes over next instant
  for (Eigen::Index k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * config.sample_period;
    record.time[k] = t;
    record.y_clean.col(k) = plant.output();
    for (int i = 0; i < p; ++i)
      record.y_measured(i, k) = record.y_clean(i, k) + noise.next(stddev);
    record.r.col(k) = references.at(t);
    if (k % per == 0)
      committed = controller.control_step(record.y_measured.col(k), record.r.col(k));
    record.u.col(k) = applied;
    if (k == n) break;
    plant.advance(applied);
    if ((k + 1) % per == 0) applied = committed;
  }
  return record;
}

}  // namespace mle
