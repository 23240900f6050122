#pragma once

#include <vector>

#include "rmgan/rng.hpp"
#include "rmgan/tensor.hpp"

namespace rmgan::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                            double lo = -2.0, double hi = 2.0) {
  Tensor t{std::move(shape)};
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = lo + (hi - lo) * rng.uniform();
  }
  return t;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace rmgan::testing
