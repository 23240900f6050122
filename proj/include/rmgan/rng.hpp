#pragma once

#include <cstdint>
#include <string_view>

namespace rmgan {

/// Counter-based pseudo-random stream.
///
/// The n-th output is the SplitMix64 finalizer applied to
/// key + n * 0x9E3779B97F4A7C15 (the golden-ratio increment), so a stream is
/// fully determined by (key, counter) and is identical across platforms and
/// runs. Child streams are derived by hashing a label or index into the key;
/// one stream per worker, never shared.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(seed), counter_(0) {}
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t next_u64();

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform();

  /// Uniform in {0, ..., n-1}; n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Standard normal via Box-Muller (two u64 draws per sample, no cache,
  /// so the stream position stays a pure function of sample count).
  double normal();

  /// Independent child stream; the label is FNV-1a hashed into the key.
  Rng split(std::string_view label) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// FNV-1a 64-bit hash; also used for checkpoint checksums.
std::uint64_t fnv1a64(const void* bytes, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace rmgan
