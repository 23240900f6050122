#pragma once

#include <cstddef>
#include <vector>

#include "rmgan/rng.hpp"
#include "rmgan/tensor.hpp"

namespace rmgan {

/// Learnable per-dimension gain/bias plus the epsilon guard used inside the
/// square root. Probes that verify gradient theory run with unit gain and
/// zero bias.
struct LayerNormParams {
  Tensor gain;  // [H]
  Tensor bias;  // [H]
  double epsilon = 1e-5;

  static LayerNormParams unit(std::size_t h, double epsilon = 1e-5);
  std::size_t dim() const { return gain.size(); }
};

struct LayerNormGrads {
  Tensor gain;
  Tensor bias;

  static LayerNormGrads zeros_like(const LayerNormParams& p);
  void zero();
};

struct LayerNormCache {
  Tensor xhat;                  // [N,H] normalized input
  std::vector<double> inv_std;  // 1/sqrt(var + eps) per row
};

/// Row-wise layer normalization over the last axis of a 2-D tensor
/// ( [N,H] ), or of a 1-D tensor treated as a single row.
/// Constant rows: with epsilon > 0 the output row equals the bias; with
/// epsilon == 0 a degenerate-input NumericError is raised.
Tensor layer_norm(const Tensor& x, const LayerNormParams& p,
                  LayerNormCache* cache = nullptr);

/// Exact gradient of layer_norm. dgain/dbias accumulate when non-null.
void layer_norm_backward(const LayerNormParams& p, const LayerNormCache& cache,
                         const Tensor& dy, Tensor& dx, Tensor* dgain = nullptr,
                         Tensor* dbias = nullptr);

/// Trial-averaged mean diagonal entry of the LN input-Jacobian at inputs
/// rescaled to empirical deviation sigma_target (unit gain, zero bias).
/// In the large-H regime this approaches 1/sigma_target.
double ln_gradient_factor_probe(std::size_t h, double sigma_target, int trials,
                                Rng& rng);

/// y = x W + b for x [N,In], W [In,Out], b [Out].
/// row_block > 0 computes the product in fixed blocks of that many rows, so
/// a row's result depends only on its own block — sentence-aligned blocks
/// make identical sentences bitwise identical at any batch position.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t row_block = 0);

/// Exact gradients; dw/db accumulate.
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     Tensor* dx, Tensor* dw, Tensor* db);

Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor gelu(const Tensor& x);
/// Backward from the *output* value y = sigmoid(x).
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);
Tensor tanh_backward(const Tensor& y, const Tensor& dy);
/// GELU backward needs the input.
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

struct SoftmaxCeCache {
  Tensor probs;                 // [N,V]
  std::vector<int> targets;
};

/// Mean cross entropy of row-wise softmax(logits) against integer targets.
/// Out-of-range target indices throw.
double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                             SoftmaxCeCache* cache = nullptr);

/// dlogits = dloss * (probs - onehot) / N.
Tensor softmax_cross_entropy_backward(const SoftmaxCeCache& cache, double dloss = 1.0);

/// Row-wise softmax probabilities (numerically stabilized).
Tensor softmax_rows(const Tensor& logits);

/// {0,1} mask with each entry independently 0 with probability rho.
/// No 1/(1-rho) rescaling: the mask selects a sub-model and is applied
/// identically in training and inference. rho must lie in [0, 1).
Tensor dropout_mask(std::size_t dim, double rho, Rng& rng);

/// Conventional inverted-dropout mask (entries 0 or 1/(1-p)) used for
/// train-time regularization inside the encoder; unrelated to the
/// sub-model-selection mask above.
Tensor scaled_dropout_mask(std::size_t n, std::size_t d, double p, Rng& rng);

}  // namespace rmgan
