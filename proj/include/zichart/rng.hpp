#pragma once

// Counter-based random streams.
//
// Every simulation replication owns its own stream, addressed by
// (master seed, stream index). The Philox4x32-10 block cipher maps a
// 128-bit counter and a 64-bit key to 128 random bits, so stream t is
// simply the counter range whose upper 64 bits equal t. No state is
// shared between streams, which is what makes results independent of
// how replications are distributed over threads.

#include <array>
#include <cstdint>
#include <limits>

namespace zichart {

/// Philox4x32 with 10 rounds.
/// Satisfies std::uniform_random_bit_generator with 64-bit output.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using counter_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    if (next_ == 4) refill();
    const std::uint64_t lo = buffer_[next_++];
    const std::uint64_t hi = buffer_[next_++];
    return (hi << 32) | lo;
  }

  /// Uniform double on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Raw block function; exposed for known-answer tests.
  static counter_type block(counter_type ctr, key_type key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

  void refill() noexcept {
    const counter_type ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                           static_cast<std::uint32_t>(stream_),
                           static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = block(ctr, key_);
    ++block_;
    next_ = 0;
  }

  key_type key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  counter_type buffer_{};
  int next_ = 4;
};

/// Hands out independent streams derived from one master seed.
class StreamFactory {
 public:
  explicit StreamFactory(std::uint64_t master_seed) noexcept : seed_(master_seed) {}

  Philox4x32 stream(std::uint64_t index) const noexcept { return {seed_, index}; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace zichart
