#pragma once

// Counter-based random streams. Every random quantity in the lab is drawn
// from a stream whose key is a hash of (seed, purpose tag, entity ids), so
// results never depend on the order in which entities are processed.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <utility>

namespace towerlab {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over bytes; used to turn opaque string ids into stream keys.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

template <class... Ts>
constexpr std::uint64_t stream_key(std::uint64_t seed, Ts... parts) noexcept {
  std::uint64_t h = splitmix64(seed);
  ((h = hash_combine(h, static_cast<std::uint64_t>(parts))), ...);
  return h;
}

/// Purpose tags keep streams for different quantities independent.
enum class StreamTag : std::uint64_t {
  label_noise = 1,
  generator_weights = 2,
  policy_noise = 3,
  exploration = 4,
  session = 5,
  tower_init = 6,
  minibatch = 7,
  corpus = 8,
  lipschitz = 9,
};

/// A sequential generator over one keyed stream.
class Stream {
 public:
  explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}

  template <class... Ts>
  static constexpr Stream make(std::uint64_t seed, StreamTag tag, Ts... ids) noexcept {
    return Stream(stream_key(seed, static_cast<std::uint64_t>(tag), ids...));
  }

  constexpr std::uint64_t next_u64() noexcept { return splitmix64(key_ ^ (counter_++ * 0xd1342543de82ef95ULL)); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  constexpr double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) by rejection (no modulo bias).
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  template <class T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace towerlab
