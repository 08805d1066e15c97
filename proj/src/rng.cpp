#include "beamkit/rng.hpp"

#include <cmath>

namespace beamkit {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline std::uint32_t mulhi32(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::uint32_t>(
      (static_cast<std::uint64_t>(a) * b) >> 32);
}

// SplitMix64 finalizer; used for key derivation only.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t Philox::split(std::uint64_t seed, std::uint64_t stream_index) {
  return mix64(mix64(seed) ^ stream_index);
}

void Philox::refill() {
  std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
  std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
  std::uint32_t x0 = c0, x1 = c1, x2 = 0x2F6E2B1Du, x3 = 0x4B0C590Fu;
  std::uint32_t k0 = static_cast<std::uint32_t>(key_);
  std::uint32_t k1 = static_cast<std::uint32_t>(key_ >> 32);
  for (int round = 0; round < 10; ++round) {
    const std::uint32_t hi0 = mulhi32(kPhiloxM0, x0);
    const std::uint32_t lo0 = kPhiloxM0 * x0;
    const std::uint32_t hi1 = mulhi32(kPhiloxM1, x2);
    const std::uint32_t lo1 = kPhiloxM1 * x2;
    const std::uint32_t y0 = hi1 ^ x1 ^ k0;
    const std::uint32_t y1 = lo1;
    const std::uint32_t y2 = hi0 ^ x3 ^ k1;
    const std::uint32_t y3 = lo0;
    x0 = y0; x1 = y1; x2 = y2; x3 = y3;
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  block_[0] = x0; block_[1] = x1; block_[2] = x2; block_[3] = x3;
  block_pos_ = 0;
  ++counter_;
}

std::uint64_t Philox::next_u64() {
  if (block_pos_ > 2) refill();
  const std::uint64_t lo = block_[block_pos_];
  const std::uint64_t hi = block_[block_pos_ + 1];
  block_pos_ += 2;
  return (hi << 32) | lo;
}

double Philox::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Philox::next_double_open() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

std::pair<double, double> Philox::next_normal_pair() {
  const double u1 = next_double_open();
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

double Philox::next_normal() {
  if (have_cached_normal_) {
    have_cached_normal_ = false;
    return cached_normal_;
  }
  auto [a, b] = next_normal_pair();
  cached_normal_ = b;
  have_cached_normal_ = true;
  return a;
}

double Philox::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

std::uint64_t Philox::next_below(std::uint64_t n) {
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = n * ((~0ull) / n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

}  // namespace beamkit
