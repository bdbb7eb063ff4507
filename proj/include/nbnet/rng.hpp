#pragma once

#include <cmath>
#include <cstdint>

namespace nbnet {

// Counter-based generator: every output is a pure function of
// (seed, stream, counter), so draws are reproducible bit-for-bit and
// independent of evaluation order. The mix is two rounds of the
// splitmix64 finalizer over the combined state.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed, uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  /// Raw 64-bit word for the given counter.
  uint64_t bits(uint64_t counter) const {
    uint64_t x = seed_ + 0x9e3779b97f4a7c15ULL * (counter + 1);
    x ^= stream_ * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL;
    x = mix(x);
    x = mix(x ^ stream_);
    return x;
  }

  /// Uniform in [0,1).
  double uniform(uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n) without std::distributions (portable).
  uint64_t uniform_int(uint64_t counter, uint64_t n) const {
    // 128-bit multiply keeps the mapping unbiased enough for n << 2^64.
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }

  /// Standard normal via Box-Muller; one draw per counter.
  double normal(uint64_t counter) const {
    double u1 = static_cast<double>((bits(2 * counter) >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t seed_;
  uint64_t stream_;
};

/// Stateful convenience wrapper: sequential draws from a CounterRng.
class SequentialRng {
 public:
  explicit SequentialRng(uint64_t seed, uint64_t stream = 0)
      : rng_(seed, stream) {}

  double uniform() { return rng_.uniform(next_++); }
  uint64_t uniform_int(uint64_t n) { return rng_.uniform_int(next_++, n); }
  double normal() { return rng_.normal(next_++); }
  uint64_t bits() { return rng_.bits(next_++); }

 private:
  CounterRng rng_;
  uint64_t next_ = 0;
};

}  // namespace nbnet
