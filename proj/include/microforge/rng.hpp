#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace microforge {

/// Counter-based splittable generator.
///
/// Output i of a stream with key k is splitmix64(k + (i+1) * golden), so the
/// whole state is (key, counter) and every platform reproduces the same
/// sequence. Child streams are derived by hashing the parent key with a tag,
/// which leaves the parent's counter untouched.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6d6963726f666f72ULL)) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix(key_ + counter_ * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal via Box-Muller; one variate per call, no cached spare.
  double normal();

  /// Independent child stream; identical (key, tag) pairs give identical children.
  CounterRng split(std::uint64_t tag) const;
  CounterRng split(std::string_view tag) const;

  std::array<std::uint8_t, 16> state() const;
  static CounterRng from_state(const std::array<std::uint8_t, 16>& bytes);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  friend bool operator==(const CounterRng&, const CounterRng&) = default;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace microforge
