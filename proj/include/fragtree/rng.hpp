#pragma once

// Splittable pseudo-random streams.
//
// Every stream is identified by a (seed, stream id) pair. The state is
// derived by SplitMix64 mixing, and the generator is xoshiro256**. All
// variate transforms are written out here rather than taken from <random>
// so that output is bit-identical across standard library implementations.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace fragtree {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_pair(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0x632be59bd9b4e019ULL + (b << 6) + (b >> 2));
  std::uint64_t out = splitmix64(s);
  s ^= b * 0xd6e8feb86659fd93ULL;
  return out ^ splitmix64(s);
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(std::uint64_t seed, std::uint64_t stream) {
    seed_ = seed;
    stream_ = stream;
    std::uint64_t sm = mix_pair(seed, stream);
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Independent child stream; does not advance this generator.
  [[nodiscard]] Rng split(std::uint64_t child) const {
    return Rng(mix_pair(seed_, stream_), child);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double exponential(double rate = 1.0) { return -std::log(uniform_open()) / rate; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's nearly-divisionless method.
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
      const double limit = std::exp(-mean);
      std::uint64_t k = 0;
      double p = uniform_open();
      while (p > limit) {
        ++k;
        p *= uniform_open();
      }
      return k;
    }
    // Sum of exponential inter-arrival times; exact, linear in the mean.
    std::uint64_t k = 0;
    double t = exponential();
    while (t < mean) {
      ++k;
      t += exponential();
    }
    return k;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> s_{};
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
};

}  // namespace fragtree
