#include "rmgan/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rmgan {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  const std::uint64_t n = counter_++;
  return mix64(key_ + (n + 1) * kGolden);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::uniform_index: n must be positive");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

double Rng::normal() {
  // u1 in (0, 1]: guards the log.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::string_view label) const {
  const std::uint64_t h = fnv1a64(label.data(), label.size());
  return Rng(mix64(key_ ^ h));
}

Rng Rng::split(std::uint64_t index) const {
  return Rng(mix64(key_ ^ mix64(index + 0x51ED270B0A5ULL)));
}

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rmgan
