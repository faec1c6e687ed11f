#pragma once

#include <cstdint>
#include <random>

namespace radloc {

/// Seeded random stream with a fixed draw algorithm for every primitive,
/// so that a (seed, call sequence) pair reproduces bit-identical values
/// across runs and thread layouts.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

  /// Child stream keyed by (seed, stream_id); independent of draws made
  /// on any other stream.
  static RandomStream derive(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller (no cached spare).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 gen_;
};

}  // namespace radloc
