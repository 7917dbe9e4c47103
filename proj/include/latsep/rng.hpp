#pragma once

#include <cstdint>
#include <iterator>
#include <random>
#include <string_view>
#include <utility>

namespace latsep {

/// Mixes a base seed with a named stream so independent consumers
/// (payload selection, cover selection, augmentation, ...) never share draws.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Deterministic random stream.
///
/// Bounded integers, uniforms and normals are computed here instead of through
/// <random> distributions, whose outputs are not specified across standard
/// library implementations. Only the raw mt19937_64 engine is relied upon.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view stream) : engine_(derive_seed(seed, stream)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform double in [0, 1).
  double uniform();

  double normal();

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    auto n = static_cast<std::uint64_t>(std::distance(first, last));
    for (std::uint64_t i = n; i > 1; --i) {
      using std::swap;
      swap(first[i - 1], first[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace latsep
