#pragma once

#include <array>
#include <cstdint>

#include "opinet/tensor.hpp"

namespace opinet {

/// xoshiro256** seeded through splitmix64.
///
/// The full state is four 64-bit words; `state()` / `from_state()` round-trip
/// it exactly, so a resumed generator continues the uninterrupted sequence.
/// Parallel consumers must each own a generator built from (seed, stream).
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);
  static Rng from_state(const State& state);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (cosine branch only, no cached spare).
  double normal();

  const State& state() const noexcept { return state_; }

 private:
  State state_{};
};

/// splitmix64 finaliser, exposed for deriving per-sample seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Throws ParameterError when std < 0.
Tensor rand_normal(Rng& rng, Shape shape, double mean, double std);
Tensor rand_uniform(Rng& rng, Shape shape, double lo, double hi);

}  // namespace opinet
