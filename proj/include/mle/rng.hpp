#pragma once

// Deterministic random number generation for the whole toolkit.
//
// Every stochastic ingredient of an experiment (measurement noise, excitation
// signals, ...) draws from its own named sub-stream derived from a single
// scenario seed, so runs are reproducible and adding draws to one purpose
// never perturbs another.  The generator is the standard MT19937-64 engine;
// Gaussian variates come from a hand-rolled Box-Muller transform instead of
// std::normal_distribution, whose output is implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace mle {

/// One SplitMix64 step; mixes `state` and returns a well-distributed word.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a hash of a purpose label such as "noise" or "excitation".
inline std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the sub-stream `label`/`index` under `master`.  Distinct labels or
/// indices give unrelated streams; the same triple always gives the same one.
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view label,
                                    std::uint64_t index = 0) {
  std::uint64_t state = master ^ hash_label(label);
  splitmix64(state);  // decorrelate from the raw XOR
  state ^= index * 0x9e3779b97f4a7c15ULL;
  return splitmix64(state);
}

/**
 * @brief Stream of i.i.d. standard normal variates (MT19937-64 + Box-Muller).
 *
 * Box-Muller produces variates in pairs; the second one is cached, so a
 * stream consumed one value at a time stays aligned with one consumed in
 * pairs.
 */
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  /// Next standard normal variate.
  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();  // in (0, 1], so log() is finite
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Next normal variate with the given standard deviation.
  double next(double stddev) { return stddev * next(); }

 private:
  double uniform01() {
    // Use the top 53 bits; +1 maps the result into (0, 1].
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mle
