#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace esgraph {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is pinned by the C++ standard, and all value transforms below are
// implemented here rather than via std::*_distribution (those are
// implementation-defined and would break cross-platform reproducibility).
class RandomSource {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64/u53/box-muller";

  explicit RandomSource(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) by rejection from the top 64-bit range.
  std::uint64_t below(std::uint64_t n);

  // Inclusive integer range.
  int uniform_int(int lo, int hi);

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Independent child stream. Tags keep unrelated call sites decorrelated
  // even when they share the root seed.
  RandomSource fork(std::uint64_t tag) const {
    return RandomSource(splitmix64(seed_ ^ splitmix64(tag * 0x9E3779B97F4A7C15ULL + 1)));
  }
  RandomSource fork(std::string_view name) const { return fork(fnv1a64(name)); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace esgraph
