#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace skillrl {

/// Deterministic random stream. All sampling in the project goes through
/// this class so that results are reproducible bit-for-bit from a single
/// seed, independent of the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Derives an independent stream from (seed, tags...). Used to give every
  /// training run, episode and worker its own stream so that parallel
  /// execution order cannot change results.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::string_view> tags);

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via the polar method (no libm trig).
  double normal();
  /// Uniform integer in [0, n).
  int uniform_int(int n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a over a byte string, used for stream derivation and content hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 1469598103934665603ull);

}  // namespace skillrl
