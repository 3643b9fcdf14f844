#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace nalm {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ull) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// SplitMix64 as a standard UniformRandomBitGenerator: a Weyl sequence
/// passed through the splitmix64 finaliser. Full 2^64 period per stream.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept {
    const std::uint64_t out = splitmix64(state_);
    state_ += 0x9E3779B97F4A7C15ull;
    return out;
  }
  friend bool operator==(const SplitMix64&, const SplitMix64&) = default;

 private:
  std::uint64_t state_;
};

/// Seedable 64-bit generator (SplitMix64).
///
/// Independent streams for one run are derived from (seed, tag) so that data,
/// initialisation and noise draws never share state:
///   stream seed = splitmix64(splitmix64(seed) ^ fnv1a64(tag)).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::string_view tag) {
    return Rng(splitmix64(splitmix64(seed) ^ fnv1a64(tag)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on the half-open interval [lo, hi).
  double uniform(double lo, double hi) {
    const double v = lo + (hi - lo) * uniform01();
    return v < hi ? v : std::nextafter(hi, lo);
  }

  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n)) % n;
  }

  double normal(double mean, double stddev) {
    return normal_(engine_, std::normal_distribution<double>::param_type(mean, stddev));
  }

  double gamma(double shape, double scale) {
    return gamma_(engine_, std::gamma_distribution<double>::param_type(shape, scale));
  }

  SplitMix64& engine() { return engine_; }

 private:
  SplitMix64 engine_;
  std::normal_distribution<double> normal_;
  std::gamma_distribution<double> gamma_;
};

}  // namespace nalm
