#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "fw/error.hpp"

namespace fw {

// Counter-based pseudo-random stream (splitmix64 applied to seed + counter).
//
// The entire state is (seed, counter), so a stream can be serialized into a
// checkpoint and restored exactly, and the d-th draw is the same on every
// platform. No std::<distribution> is used anywhere: those are allowed to
// differ between standard library implementations, which would silently break
// checkpoint resume and cross-machine reproducibility.
class RandomStream {
 public:
  // Identifies the generator algorithm in serialized state, so a checkpoint
  // written by a future incompatible generator is rejected instead of
  // silently producing a different run.
  static constexpr std::uint32_t kAlgorithmId = 1;

  RandomStream() = default;
  explicit RandomStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  void restore(std::uint64_t seed, std::uint64_t counter) {
    seed_ = seed;
    counter_ = counter;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Always consumes exactly two draws and
  // never caches the second value: a cached value would live outside the
  // (seed, counter) state and break exact restore.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n). Multiply-shift with rejection, so the result
  // is exactly unbiased for any n.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("RandomStream::below: n must be positive");
    while (true) {
      std::uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      auto lo = static_cast<std::uint64_t>(m);
      if (lo >= n || lo >= (0 - n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

  // In-place Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

// Deterministically derives an independent child seed from (seed, tag, lane).
// Used to give samplers, initializers, label noise and evaluation episodes
// their own streams so that adding draws to one never shifts another.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t lane = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag bytes
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  RandomStream mix(seed ^ h);
  mix.restore(mix.seed(), lane * 2654435761ULL);
  return mix.next_u64();
}

}  // namespace fw
