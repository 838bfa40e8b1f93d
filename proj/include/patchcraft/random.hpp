#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace patchcraft {

// Deterministic random source. The standard distributions are
// implementation-defined, so every sampler here is written out against the
// raw 64-bit engine output and gives the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased.
  std::size_t below(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  double normal();

  // Normal(0, stddev) restricted to [-bound * stddev, bound * stddev] by rejection.
  double truncated_normal(double stddev, double bound = 2.0);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Derives an independent seed from a base seed and a tuple of coordinates.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

}  // namespace patchcraft
