#pragma once

#include <cstdint>
#include <random>

namespace ergodic {

/// One random stream per trajectory, keyed by (master_seed, stream_index).
/// Streams with different keys are statistically independent; the same key
/// always yields the same sequence.
class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, std::uint64_t stream_index)
      : master_seed_(master_seed), stream_index_(stream_index), engine_(seed(master_seed, stream_index)) {}

  /// Uniform on [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bit() { return (engine_() >> 63) != 0; }
  double normal() { return gaussian_(engine_); }

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_index() const noexcept { return stream_index_; }

 private:
  static std::mt19937_64 seed(std::uint64_t master, std::uint64_t index) {
    std::seed_seq sequence{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                           static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                           0x65726764u};
    return std::mt19937_64(sequence);
  }

  std::uint64_t master_seed_;
  std::uint64_t stream_index_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> gaussian_{};
};

}  // namespace ergodic
