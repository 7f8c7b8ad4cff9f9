#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ulab {

/// Derive an independent child seed from a parent seed and a role name.
/// Adding a new role never perturbs the streams of existing roles.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view role);

/// 64-bit FNV-1a, used for seed derivation and config hashing.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Seeded random stream. Conversions from raw bits are done here rather than
/// through <random> distributions so streams are identical across standard
/// library implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1]; safe as a log argument.
  double uniform_pos() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal();

  /// Uniform integer in [0, n) by rejection.
  std::size_t below(std::size_t n);

  /// Seeded Fisher-Yates shuffle.
  template <typename T> void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

private:
  std::mt19937_64 engine_;
};

} // namespace ulab
