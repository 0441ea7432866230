#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mmnet {

// Deterministic random source used everywhere randomness is needed.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the C++
// standard, so identical seeds give identical 64-bit streams on every
// platform. All value mappings (uniform doubles, integer ranges, normals)
// are implemented here by hand instead of via std distributions, because
// the standard does not pin those down.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1): top 53 bits of the stream scaled by 2^-53.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection-free modulo is biased; n here is
  // always tiny (candidate counts, crop offsets), so use 64-bit rejection
  // sampling to stay exact and portable.
  std::uint64_t uniform_int(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via the polar (Marsaglia) method. Consumes a variable
  // but seed-determined number of uniforms; caches the second deviate.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable seed derivation for independent substreams: FNV-1a over the tag
// bytes mixed with the parent seed and indices through splitmix64 finalizers.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag,
                          std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace mmnet
