#pragma once

#include <cstdint>

namespace poquim {

/// xoshiro256++ generator with splitmix64 seeding. Streams for Monte
/// Carlo replicates are derived from (master seed, replicate index) so
/// that every replicate is reproducible independently of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }
  Rng(std::uint64_t master_seed, std::uint64_t stream_index) {
    reseed(derive_stream_seed(master_seed, stream_index));
  }

  void reseed(std::uint64_t seed);

  static std::uint64_t derive_stream_seed(std::uint64_t master_seed,
                                          std::uint64_t stream_index);

  std::uint64_t next_u64();

  /// Uniform on (0, 1); never returns 0 or 1.
  double uniform();

  /// Standard normal via Box-Muller (pairs cached).
  double normal();

  /// Exponential with mean 1.
  double exponential();

 private:
  std::uint64_t state_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace poquim
