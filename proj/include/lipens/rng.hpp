#pragma once

#include <cstdint>
#include <vector>

namespace lipens {

/// Deterministic, platform-independent random generator (splitmix64 core).
///
/// The standard library engines are portable but the distributions are not,
/// so everything downstream (init, shuffling, ascent restarts) goes through
/// this class. Seeds for independent tasks are derived with `derive`, which
/// keeps parallel work reproducible regardless of scheduling.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; second member of the pair is cached.
  double normal();

  /// Uniform integer in [0, n). n must be positive.
  std::int64_t uniform_int(std::int64_t n);

  /// +1 or -1 with equal probability.
  double sign() { return (next_u64() & 1ull) ? 1.0 : -1.0; }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      std::int64_t j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

  /// Stateless seed derivation for independent streams.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

private:
  std::uint64_t state_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace lipens
