#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "opinet/neural.hpp"
#include "opinet/ntk.hpp"
#include "opinet/rng.hpp"

namespace opinet {

struct OptimizerConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch = 64;
  std::size_t epochs = 100;

  void validate() const;
};

/// Everything a training loop mutates. m and v share the params layout.
struct TrainState {
  ParamVector params;
  ParamVector m;
  ParamVector v;
  long step = 0;
  double lr = 0.001;
  std::optional<NtkGram> reference;
  Rng rng;

  TrainState() = default;
  TrainState(ParamVector initial, double lr, std::uint64_t seed);
};

/// Bias-corrected Adam with the state's current lr. DimensionError on a
/// layout mismatch, NumericError naming the parameter on a non-finite gradient.
void adam_step(TrainState& state, const ParamVector& grads, const OptimizerConfig& cfg);

}  // namespace opinet
