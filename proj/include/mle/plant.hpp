#pragma once

// First-order-plus-dead-time (FOPDT) transfer-function matrices and their
// exact zero-order-hold simulation.
//
// A channel K·e^{-Ls}/(1+Ts) driven by an input held constant over each
// sample period obeys the exact discrete recursion
//
//     x[k+1] = a·x[k] + K(1-a)·u[k-n],   a = exp(-dt/T),  n = L/dt,
//
// so as long as every dead time is an integer number of samples the simulator
// reproduces the continuous-time response at the sample instants to round-off
// accuracy.  Dead times are realised as FIFO delay lines on the inputs.

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mle {

/// One FOPDT channel K·e^{-Ls}/(1+Ts).
struct FopdtChannel {
  double gain = 0.0;           ///< K
  double time_constant = 1.0;  ///< T, minutes; must be > 0
  double dead_time = 0.0;      ///< L, minutes; must be >= 0
};

/// Continuous-time unit-step response of a channel, step applied at t = 0.
inline double analytic_step_response(const FopdtChannel& ch, double t) {
  if (t < ch.dead_time) return 0.0;
  return ch.gain * (1.0 - std::exp(-(t - ch.dead_time) / ch.time_constant));
}

/// Continuous-time impulse response of a channel.
inline double analytic_impulse_response(const FopdtChannel& ch, double t) {
  if (t < ch.dead_time) return 0.0;
  return ch.gain / ch.time_constant * std::exp(-(t - ch.dead_time) / ch.time_constant);
}

/**
 * @brief Dense p x m grid of FOPDT channels.
 *
 * Output i is the sum of the channel responses of row i, one channel per
 * input.  Indices are 0-based in code; diagnostics print the conventional
 * 1-based (output, input) pair.
 */
class TransferMatrixModel {
 public:
  TransferMatrixModel(int outputs, int inputs, std::vector<FopdtChannel> channels)
      : outputs_(outputs), inputs_(inputs), channels_(std::move(channels)) {
    if (outputs_ < 1 || inputs_ < 1)
      throw std::invalid_argument("TransferMatrixModel: needs at least one input and one output");
    if (static_cast<int>(channels_.size()) != outputs_ * inputs_)
      throw std::invalid_argument("TransferMatrixModel: channel grid size mismatch");
    for (int i = 0; i < outputs_; ++i)
      for (int j = 0; j < inputs_; ++j) {
        const FopdtChannel& ch = channel(i, j);
        if (!std::isfinite(ch.gain) || !std::isfinite(ch.time_constant) ||
            !std::isfinite(ch.dead_time) || ch.time_constant <= 0.0 || ch.dead_time < 0.0) {
          std::ostringstream msg;
          msg << "TransferMatrixModel: invalid parameters in channel (" << i + 1 << "," << j + 1
              << "): K=" << ch.gain << " T=" << ch.time_constant << " L=" << ch.dead_time
              << " (need finite K, T > 0, L >= 0)";
          throw std::invalid_argument(msg.str());
        }
      }
  }

  int outputs() const { return outputs_; }
  int inputs() const { return inputs_; }

  const FopdtChannel& channel(int output, int input) const {
    return channels_[static_cast<std::size_t>(output) * inputs_ + input];
  }

 private:
  int outputs_;
  int inputs_;
  std::vector<FopdtChannel> channels_;  // row-major: (output, input)
};

/// Additive parameter perturbations, one entry per channel; empty = all zero.
struct MismatchSpec {
  Eigen::MatrixXd gain_delta;       ///< ΔK, p x m
  Eigen::MatrixXd dead_time_delta;  ///< ΔL, p x m (minutes)
};

/// The Wood-Berry binary distillation column model, a classic 2x2 benchmark:
/// inputs are reflux and steam flow, outputs are top and bottom compositions.
inline TransferMatrixModel wood_berry() {
  return TransferMatrixModel(2, 2,
                             {FopdtChannel{12.8, 16.7, 1.0}, FopdtChannel{-18.9, 21.0, 3.0},
                              FopdtChannel{6.6, 10.9, 7.0}, FopdtChannel{-19.4, 14.4, 3.0}});
}

/// Returns a copy of `model` with the perturbations of `mismatch` added on.
/// Throws if a perturbed dead time would become negative.
inline TransferMatrixModel apply_mismatch(const TransferMatrixModel& model,
                                          const MismatchSpec& mismatch) {
  const int p = model.outputs(), m = model.inputs();
  auto check_shape = [&](const Eigen::MatrixXd& d, const char* name) {
    if (d.size() != 0 && (d.rows() != p || d.cols() != m))
      throw std::invalid_argument(std::string("apply_mismatch: ") + name +
                                  " must be empty or match the channel grid");
  };
  check_shape(mismatch.gain_delta, "gain_delta");
  check_shape(mismatch.dead_time_delta, "dead_time_delta");

  std::vector<FopdtChannel> channels;
  channels.reserve(static_cast<std::size_t>(p) * m);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < m; ++j) {
      FopdtChannel ch = model.channel(i, j);
      if (mismatch.gain_delta.size() != 0) ch.gain += mismatch.gain_delta(i, j);
      if (mismatch.dead_time_delta.size() != 0) ch.dead_time += mismatch.dead_time_delta(i, j);
      if (ch.dead_time < 0.0) {
        std::ostringstream msg;
        msg << "apply_mismatch: channel (" << i + 1 << "," << j + 1 << ") dead time becomes "
            << ch.dead_time << " min; dead times must stay >= 0";
        throw std::invalid_argument(msg.str());
      }
      channels.push_back(ch);
    }
  return TransferMatrixModel(p, m, std::move(channels));
}

/**
 * @brief Exact zero-order-hold simulator for a TransferMatrixModel.
 *
 * advance(u) applies `u` over one sample period and returns the outputs at
 * the end of that period; output() re-reads the most recent sample.  Every
 * dead time must be an integer multiple of the sample period (within 1e-9
 * minutes), otherwise construction fails naming the offending channel.
 */
class PlantSimulator {
 public:
  PlantSimulator(const TransferMatrixModel& model, double sample_period)
      : outputs_(model.outputs()), inputs_(model.inputs()), sample_period_(sample_period) {
    if (!(sample_period > 0.0) || !std::isfinite(sample_period))
      throw std::invalid_argument("PlantSimulator: sample period must be positive");
    channels_.reserve(static_cast<std::size_t>(outputs_) * inputs_);
    for (int i = 0; i < outputs_; ++i)
      for (int j = 0; j < inputs_; ++j) {
        const FopdtChannel& ch = model.channel(i, j);
        const long long n = std::llround(ch.dead_time / sample_period);
        if (std::abs(ch.dead_time - static_cast<double>(n) * sample_period) > 1e-9) {
          std::ostringstream msg;
          msg << "PlantSimulator: channel (" << i + 1 << "," << j + 1 << ") dead time "
              << ch.dead_time << " min is not an integer multiple of the sample period "
              << sample_period << " min";
          throw std::invalid_argument(msg.str());
        }
        Channel state;
        state.decay = std::exp(-sample_period / ch.time_constant);
        state.drive = ch.gain * (1.0 - state.decay);
        state.line.assign(static_cast<std::size_t>(n), 0.0);
        channels_.push_back(std::move(state));
      }
    last_output_ = Eigen::VectorXd::Zero(outputs_);
  }

  int outputs() const { return outputs_; }
  int inputs() const { return inputs_; }
  double sample_period() const { return sample_period_; }

  /// Length of the input delay line of channel (output, input), in samples.
  int delay_length(int output, int input) const {
    return static_cast<int>(channels_[static_cast<std::size_t>(output) * inputs_ + input]
                                .line.size());
  }

  /// Advance one sample period with `u` held constant; returns the outputs at
  /// the new sample instant.
  const Eigen::VectorXd& advance(const Eigen::VectorXd& u) {
    if (u.size() != inputs_)
      throw std::invalid_argument("PlantSimulator::advance: input vector has wrong length");
    for (int i = 0; i < outputs_; ++i) {
      double acc = 0.0;
      for (int j = 0; j < inputs_; ++j) {
        Channel& ch = channels_[static_cast<std::size_t>(i) * inputs_ + j];
        double delayed = u[j];
        if (!ch.line.empty()) {  // pop the oldest held input, push the new one
          delayed = ch.line[ch.head];
          ch.line[ch.head] = u[j];
          ch.head = (ch.head + 1) % ch.line.size();
        }
        ch.state = ch.decay * ch.state + ch.drive * delayed;
        acc += ch.state;
      }
      last_output_[i] = acc;
    }
    return last_output_;
  }

  /// Outputs at the most recent sample instant (zero right after construction).
  const Eigen::VectorXd& output() const { return last_output_; }

  /// Back to rest: zero states, zero delay lines, zero outputs.
  void reset() {
    for (Channel& ch : channels_) {
      ch.state = 0.0;
      ch.head = 0;
      std::fill(ch.line.begin(), ch.line.end(), 0.0);
    }
    last_output_.setZero();
  }

 private:
  struct Channel {
    double decay = 0.0;         // a = exp(-dt/T)
    double drive = 0.0;         // K(1-a)
    double state = 0.0;         // lag state = this channel's output contribution
    std::vector<double> line;   // circular buffer of the last n inputs
    std::size_t head = 0;       // oldest entry
  };

  int outputs_;
  int inputs_;
  double sample_period_;
  std::vector<Channel> channels_;  // row-major: (output, input)
  Eigen::VectorXd last_output_;
};

}  // namespace mle
