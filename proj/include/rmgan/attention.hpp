#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rmgan/ops.hpp"
#include "rmgan/rng.hpp"
#include "rmgan/tensor.hpp"

namespace rmgan {

/// Shape of one encoder batch: rows of the flattened [B*T, E] activations
/// map to (sentence b, position t) via row = b*T + t.
struct BatchLayout {
  std::size_t batch = 0;
  std::size_t time = 0;

  std::size_t rows() const { return batch * time; }
};

struct EncoderConfig {
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  double dropout = 0.1;  // inverted dropout, training only
};

/// Pre-norm residual block: x + Attn(LN(x)), then x + FFN(LN(x)) with a
/// GELU hidden layer. Attention keys at padding positions are masked out.
struct EncoderBlockParams {
  LayerNormParams ln1, ln2;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor w1, b1, w2, b2;

  static EncoderBlockParams create(const EncoderConfig& cfg, Rng& rng);
};

struct EncoderBlockGrads {
  LayerNormGrads ln1, ln2;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor w1, b1, w2, b2;

  static EncoderBlockGrads zeros_like(const EncoderBlockParams& p);
  void zero();
};

struct EncoderBlockCache {
  LayerNormCache ln1, ln2;
  Tensor a;                     // LN1 output
  Tensor q, k, v;               // projections [N,E]
  std::vector<Tensor> attn;     // per (sentence*head) softmax probabilities [T,T]
  Tensor heads_out;             // concatenated head outputs [N,E]
  Tensor x2;                    // after the attention residual
  Tensor f;                     // LN2 output
  Tensor g1, g2;                // FFN pre-activation and GELU output
  Tensor attn_drop, ffn_drop;   // inverted-dropout masks (empty when inactive)
};

Tensor encoder_block_forward(const EncoderBlockParams& p, const EncoderConfig& cfg,
                             const Tensor& x, const BatchLayout& layout,
                             const std::vector<std::uint8_t>& key_valid,
                             bool training, Rng* dropout_rng,
                             EncoderBlockCache* cache);

void encoder_block_backward(const EncoderBlockParams& p, const EncoderConfig& cfg,
                            const EncoderBlockCache& cache, const BatchLayout& layout,
                            const Tensor& d_out, Tensor& d_x,
                            EncoderBlockGrads& grads);

void append_block_params(std::vector<std::pair<std::string, Tensor*>>& out,
                         EncoderBlockParams& p, const std::string& prefix);
void append_block_grads(std::vector<std::pair<std::string, Tensor*>>& out,
                        EncoderBlockGrads& g, const std::string& prefix);

}  // namespace rmgan
