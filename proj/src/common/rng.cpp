#include "microforge/rng.hpp"

#include <cmath>
#include <numbers>

namespace microforge {

std::uint64_t CounterRng::below(std::uint64_t bound) {
  // Rejection keeps the distribution exactly uniform.
  const std::uint64_t limit = bound * (UINT64_MAX / bound);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % bound;
}

double CounterRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CounterRng CounterRng::split(std::uint64_t tag) const {
  CounterRng child;
  child.key_ = mix(key_ ^ mix(tag + 0x5bd1e995ULL));
  child.counter_ = 0;
  return child;
}

CounterRng CounterRng::split(std::string_view tag) const {
  // FNV-1a of the tag, then the integer split.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return split(h);
}

std::array<std::uint8_t, 16> CounterRng::state() const {
  std::array<std::uint8_t, 16> out{};
  for (int i = 0; i < 8; ++i) {
    out[i] = static_cast<std::uint8_t>(key_ >> (8 * i));
    out[8 + i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
  }
  return out;
}

CounterRng CounterRng::from_state(const std::array<std::uint8_t, 16>& bytes) {
  CounterRng rng;
  rng.key_ = 0;
  rng.counter_ = 0;
  for (int i = 0; i < 8; ++i) {
    rng.key_ |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    rng.counter_ |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  }
  return rng;
}

}  // namespace microforge
