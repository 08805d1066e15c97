#pragma once

#include <cstdint>
#include <utility>

namespace beamkit {

// Counter-based generator (Philox4x32-10). A stream is identified by a
// 64-bit key; draws are a pure function of (key, counter), so any draw can
// be reproduced without replaying the ones before it.
//
// Stream-splitting rule used throughout the library: a parent seed plus a
// 64-bit stream index map to the child key
//   child_key = mix(seed, stream_index)
// via `split` below. Dataset generation uses stream_index = sample index,
// weight init uses stream_index = parameter ordinal. Results are therefore
// independent of generation order and of any parallel scheduling.
class Philox {
 public:
  explicit Philox(std::uint64_t key) : key_(key) {}

  static std::uint64_t split(std::uint64_t seed, std::uint64_t stream_index);

  // Next 64 random bits.
  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double();

  // Uniform in (0, 1] (never zero; safe under log()).
  double next_double_open();

  // Standard normal pair via Box-Muller.
  std::pair<double, double> next_normal_pair();

  // One standard normal (buffers the Box-Muller partner).
  double next_normal();

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi);

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

  std::uint64_t counter() const { return counter_; }

 private:
  void refill();

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  std::uint32_t block_[4] = {0, 0, 0, 0};
  int block_pos_ = 4;  // consumed
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace beamkit
