#pragma once

#include "opinet/deeponet.hpp"

namespace oracle {

/// Small DeepONet (under 2000 branch+trunk parameters) for exhaustive checks.
inline opinet::DeepONetConfig small_config() {
  opinet::DeepONetConfig cfg;
  cfg.latent_dim = 8;
  cfg.hidden = 16;
  cfg.hidden_layers = 2;
  cfg.head_hidden = 16;
  cfg.head_layers = 2;
  cfg.decoder_hidden_layers = 1;
  cfg.max_sources = 3;
  return cfg;
}

inline std::vector<opinet::SourceSpec> random_sources(opinet::Rng& rng, std::size_t n) {
  std::vector<opinet::SourceSpec> s(n);
  for (auto& src : s) {
    src.location = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    src.strength = {rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5)};
  }
  return s;
}

inline opinet::ReceiverSet random_receivers(opinet::Rng& rng, std::size_t n) {
  opinet::Tensor pts({n, 2});
  for (auto& v : pts.values()) v = rng.uniform(0.05, 0.95);
  return opinet::ReceiverSet(pts);
}

}  // namespace oracle
