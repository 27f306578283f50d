#pragma once

#include <cstdint>
#include <string_view>

namespace emcad {

/// Counter-based generator: the value at (seed, stream, counter) is a pure
/// function of those three integers, so draws are reproducible across
/// platforms and independent of call order.
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ull))) {}

  [[nodiscard]] std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix(key_ + counter * 0xD1B54A32D192ED03ull);
  }

  // Uniform in [lo, hi) with 24 bits of resolution (exact in float).
  [[nodiscard]] float uniform(std::uint64_t counter, float lo,
                              float hi) const noexcept {
    const double u =
        static_cast<double>(bits(counter) >> 40) * (1.0 / 16777216.0);
    return static_cast<float>(lo + (static_cast<double>(hi) - lo) * u);
  }

  // splitmix64 finalizer
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // FNV-1a, used to derive a stream id from a parameter name.
  static constexpr std::uint64_t hash(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char ch : s) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001B3ull;
    }
    return h;
  }

private:
  std::uint64_t key_;
};

/// Sequential draws over a CounterRng, for generating test instances.
class Sampler {
public:
  explicit Sampler(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : rng_(seed, stream) {}

  float uniform(float lo, float hi) noexcept {
    return rng_.uniform(counter_++, lo, hi);
  }
  // Uniform integer in [lo, hi].
  int integer(int lo, int hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(rng_.bits(counter_++) % span);
  }
  bool coin() noexcept { return (rng_.bits(counter_++) & 1u) != 0; }

private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

} // namespace emcad
