#pragma once

#include <cstdint>

namespace qnn {

// xoshiro256** seeded through splitmix64.
//
// The generator state for (seed, stream) is the first four outputs of a
// splitmix64 sequence started at seed + stream * 0xD1B54A32D192ED03. A given
// (seed, stream) pair yields the same integer and uniform sequence on every
// platform; normal() additionally depends on the libm log/sin/cos.
// std::*_distribution is not used because its output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  // Independent generator for a sub-task; depends only on (seed, stream id).
  Rng split(std::uint64_t stream) const { return Rng(seed_, stream_ * 0x100000001B3ull + stream + 1); }

  std::uint64_t next_u64();
  // [0, 1) with 53 random bits.
  double uniform();
  // (0, 1), never exactly 0 or 1.
  double uniform_open();
  // Uniform integer in [0, n), unbiased (rejection on the top bits).
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via the Box-Muller transform; the second variate of each
  // pair is cached.
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace qnn
