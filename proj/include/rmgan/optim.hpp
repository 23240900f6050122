#pragma once

#include <cstddef>
#include <vector>

#include "rmgan/tensor.hpp"

namespace rmgan {

/// Adaptive moment estimation with optional decoupled weight decay
/// (weight_decay == 0 gives plain Adam).
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class AdamW {
 public:
  explicit AdamW(AdamConfig cfg) : cfg_(cfg) {}

  /// Applies one update. The param/grad lists must keep the same order and
  /// shapes across calls; moment buffers are allocated on first use.
  void step(const std::vector<Tensor*>& params,
            const std::vector<const Tensor*>& grads);

  const AdamConfig& config() const { return cfg_; }
  std::size_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace rmgan
