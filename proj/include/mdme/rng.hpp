#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace mdme {

/// Counter-based SplitMix64 stream. Output i is a pure function of
/// (seed, i), so identical seeds and call sequences give identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  /// Independent child stream; advances this stream by one draw.
  Rng split();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_normal_;
};

/// Stateless SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace mdme
