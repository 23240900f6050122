#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rmgan/ops.hpp"
#include "rmgan/rng.hpp"
#include "rmgan/tensor.hpp"

namespace rmgan {

enum class LstmVariant { kVanilla, kLayerNorm, kFullyNormalized };

std::string variant_name(LstmVariant v);
LstmVariant variant_from_name(const std::string& name);

/// One cell's parameters. Gate blocks along the 4H axis are ordered
/// (f, i, o, c-hat); that ordering is part of the checkpoint format.
///
/// Normalization sites, by variant:
///   Vanilla          — none
///   LayerNorm        — both input projections and the cell state
///   FullyNormalized  — LayerNorm sites plus the hidden state
/// The bias b is added outside the normalized projections.
struct LstmCellParams {
  Tensor w_h;  // [H, 4H]
  Tensor w_x;  // [X, 4H]
  Tensor b;    // [4H]
  LayerNormParams ln_h;    // over 4H
  LayerNormParams ln_x;    // over 4H
  LayerNormParams ln_c;    // over H
  LayerNormParams ln_out;  // over H

  std::size_t hidden_dim() const { return w_h.rows(); }
  std::size_t input_dim() const { return w_x.rows(); }
};

struct LstmCellGrads {
  Tensor w_h, w_x, b;
  LayerNormGrads ln_h, ln_x, ln_c, ln_out;

  static LstmCellGrads zeros_like(const LstmCellParams& p);
  void zero();
};

/// Batched recurrent state, h and c are [B, H].
struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(std::size_t batch, std::size_t hidden);
};

struct LstmCellCache {
  Tensor x, h_prev, c_prev;
  Tensor f, i, o, chat;  // gate activations, [B,H] each
  Tensor tanh_c;         // tanh of the (possibly normalized) cell state
  Tensor c_new;
  LayerNormCache ln_h, ln_x, ln_c, ln_out;
};

/// One step of the chosen variant. A non-finite intermediate raises
/// NumericError naming the producing site.
LstmState cell_forward(LstmVariant variant, const LstmCellParams& params,
                       const Tensor& x, const LstmState& state,
                       LstmCellCache* cache = nullptr);

/// Exact gradients of cell_forward. dh/dc are the gradients on the step's
/// outputs; dx and d_state receive input/state gradients, grads accumulates
/// parameter gradients.
void cell_backward(LstmVariant variant, const LstmCellParams& params,
                   const LstmCellCache& cache, const Tensor& dh,
                   const Tensor& dc, Tensor& dx, LstmState& d_state,
                   LstmCellGrads& grads);

/// Multi-layer stack; layer l feeds its hidden sequence to layer l+1.
struct LstmStack {
  LstmVariant variant = LstmVariant::kFullyNormalized;
  std::vector<LstmCellParams> layers;

  static LstmStack create(LstmVariant variant, std::size_t input_dim,
                          std::size_t hidden_dim, std::size_t depth, Rng& rng);

  std::size_t depth() const { return layers.size(); }
  std::size_t hidden_dim() const { return layers.back().hidden_dim(); }
  std::size_t input_dim() const { return layers.front().input_dim(); }

  /// Active parameters for the variant, in checkpoint order.
  std::vector<std::pair<std::string, Tensor*>> named_parameters(
      const std::string& prefix);
  std::vector<std::pair<std::string, const Tensor*>> named_parameters(
      const std::string& prefix) const;
};

struct LstmStackGrads {
  std::vector<LstmCellGrads> layers;

  static LstmStackGrads zeros_like(const LstmStack& stack);
  void zero();
  std::vector<std::pair<std::string, Tensor*>> named_grads(const LstmStack& stack);
};

struct LstmStackState {
  std::vector<LstmState> layers;

  static LstmStackState zeros(const LstmStack& stack, std::size_t batch);
};

struct LstmStackCache {
  // steps[t][l]
  std::vector<std::vector<LstmCellCache>> steps;
};

/// Advances all layers one timestep; returns the last layer's hidden output.
/// When cache is non-null the step's cell caches are appended.
Tensor stack_step(const LstmStack& stack, const Tensor& x, LstmStackState& state,
                  LstmStackCache* cache = nullptr);

/// Runs the stack over a sequence from a zero initial state.
/// Returns hidden sequences per layer: result[l][t] is [B, H].
std::vector<std::vector<Tensor>> stack_forward(const LstmStack& stack,
                                               const std::vector<Tensor>& inputs,
                                               LstmStackCache* cache = nullptr);

/// Backpropagates through time. d_h_last[t] is the gradient on the last
/// layer's hidden output at step t. Gradients on inputs are written to
/// d_inputs when non-null; parameter gradients accumulate into grads.
void stack_backward(const LstmStack& stack, const LstmStackCache& cache,
                    const std::vector<Tensor>& d_h_last,
                    std::vector<Tensor>* d_inputs, LstmStackGrads& grads);

/// Loss hook for gradient probes: receives the last layer's hidden sequence
/// and fills the upstream gradient for each step; returns the loss value.
using ProbeLoss = std::function<double(const std::vector<Tensor>& h_last,
                                       std::vector<Tensor>& d_h_last)>;

/// Frobenius norm of the last layer's input-projection gradient (dW_x),
/// one entry per batch, without applying any update.
std::vector<double> grad_norm_probe(const LstmStack& stack, const ProbeLoss& loss_fn,
                                    const std::vector<std::vector<Tensor>>& batches,
                                    std::size_t n_batches);

}  // namespace rmgan
