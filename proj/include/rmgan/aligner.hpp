#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rmgan/attention.hpp"
#include "rmgan/ops.hpp"
#include "rmgan/rng.hpp"
#include "rmgan/tensor.hpp"
#include "rmgan/vocab.hpp"

namespace rmgan {

// ---------------------------------------------------------------------------
// Masked-prediction corruption

enum class MaskAction : std::uint8_t { kMask, kRandomReplace, kKeepSelected };

/// Per-position selection probability and the action split among selected
/// positions. [PAD] is never selected. Sentences of at least
/// guarantee_min_len non-pad tokens are guaranteed one selection.
struct MaskingPlan {
  double select_prob = 0.15;
  double mask_frac = 0.8;
  double random_frac = 0.1;  // remainder keeps the original token
  std::size_t guarantee_min_len = 7;
};

struct MaskedBatch {
  struct Target {
    std::size_t row;
    std::size_t pos;
    int original;
    MaskAction action;
  };
  std::vector<std::vector<int>> corrupted;
  std::vector<Target> targets;
};

MaskedBatch mask_batch(const std::vector<std::vector<int>>& batch,
                       const Vocabulary& vocab, const MaskingPlan& plan, Rng& rng);

// ---------------------------------------------------------------------------
// Model

struct AlignerConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 64;
  std::size_t repr_dim = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t max_len = 12;
  double dropout = 0.1;
  double logvar_min = -10.0;
  double logvar_max = 4.0;

  EncoderConfig encoder() const {
    return EncoderConfig{model_dim, heads, ffn_dim, dropout};
  }
};

/// Masked encoder producing per-position Gaussian parameters (mu, log
/// sigma^2) plus the decoding transform F_LT shared with the generator.
/// After training the model is frozen and carries a canonical per-word
/// representation table (corpus-mean mu per word).
struct AlignerParams {
  AlignerConfig cfg;
  Tensor tok_emb;  // [V,E]
  Tensor pos_emb;  // [max_len,E]
  std::vector<EncoderBlockParams> blocks;
  LayerNormParams ln_final;
  Tensor w_mu, b_mu;  // [E,Er],[Er]
  Tensor w_ls, b_ls;
  Tensor w_lt, b_lt;  // F_LT: [Er,V],[V]
  Tensor word_mu;     // [V,Er]; valid once frozen
  bool frozen = false;

  static AlignerParams create(const AlignerConfig& cfg, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
};

struct AlignerGrads {
  Tensor tok_emb, pos_emb;
  std::vector<EncoderBlockGrads> blocks;
  LayerNormGrads ln_final;
  Tensor w_mu, b_mu, w_ls, b_ls, w_lt, b_lt;

  static AlignerGrads zeros_like(const AlignerParams& p);
  void zero();
  std::vector<std::pair<std::string, Tensor*>> named_grads();
};

struct AlignerForwardCache {
  BatchLayout layout;
  std::vector<int> ids;  // row-major [B*T]
  std::vector<std::uint8_t> key_valid;
  Tensor emb_drop;
  std::vector<EncoderBlockCache> blocks;
  LayerNormCache ln_final;
  Tensor y;       // final LN output [N,E]
  Tensor ls_raw;  // pre-clamp log variance
};

/// Encodes a batch of id rows (padded internally to max_len with [PAD]).
/// mu and logvar come back as [B*T, Er] with row index b*max_len + t.
void aligner_forward(const AlignerParams& p,
                     const std::vector<std::vector<int>>& batch, bool training,
                     Rng* dropout_rng, Tensor& mu, Tensor& logvar,
                     AlignerForwardCache* cache = nullptr);

void aligner_backward(const AlignerParams& p, const AlignerForwardCache& cache,
                      const Tensor& dmu, const Tensor& dlogvar, AlignerGrads& grads);

// ---------------------------------------------------------------------------
// Reparameterization and the variance-penalized objective

struct ReparamCache {
  Tensor eps;
  Tensor sigma;
};

/// z = mu + sigma * eps with eps ~ N(0, I); gradients flow to mu/logvar only.
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng,
                      ReparamCache* cache = nullptr);
/// Deterministic variant with injected noise.
Tensor reparameterize_with(const Tensor& mu, const Tensor& logvar,
                           const Tensor& eps, ReparamCache* cache = nullptr);
void reparameterize_backward(const ReparamCache& cache, const Tensor& dz,
                             Tensor& dmu, Tensor& dlogvar);

struct AlignerLossParts {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double penalty = 0.0;
};

struct AlignerLossCache {
  SoftmaxCeCache ce;
  Tensor mu, logvar;
  double lambda_a = 0.0;
};

/// Reconstruction CE at target positions + diagonal-Gaussian KL against
/// N(0, I) + lambda_a * mean(log sigma^2); all terms averaged over targets
/// (the penalty also over representation dimensions).
AlignerLossParts aligner_loss(const Tensor& logits, const std::vector<int>& targets,
                              const Tensor& mu_t, const Tensor& logvar_t,
                              double lambda_a, AlignerLossCache* cache = nullptr);

void aligner_loss_backward(const AlignerLossCache& cache, Tensor& dlogits,
                           Tensor& dmu, Tensor& dlogvar);

// ---------------------------------------------------------------------------
// Training

struct AlignerTrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double lambda_a = 0.1;
  double target_accuracy = 0.97;  // early stop; 0 disables
  std::size_t eval_every = 5;
  std::size_t eval_sentences = 1000;
  MaskingPlan masking;
};

struct AlignerEpochStats {
  std::size_t epoch = 0;
  double loss = 0.0, recon = 0.0, kl = 0.0, penalty = 0.0;
  double masked_accuracy = -1.0;  // -1 when not evaluated this epoch
};

struct AlignerTrainResult {
  std::vector<AlignerEpochStats> trace;
  double final_accuracy = 0.0;
  std::size_t epochs_run = 0;
};

/// Runs masked-objective epochs with AdamW, then freezes the model and
/// fills the word-representation table. Divergence raises NumericError.
AlignerTrainResult train_aligner(AlignerParams& model, const SentenceSet& corpus,
                                 const Vocabulary& vocab,
                                 const AlignerTrainConfig& cfg, Rng& rng);

/// Deterministic masked-reconstruction accuracy on a corpus sample,
/// decoding F_LT(mu) at masked positions.
double masked_reconstruction_accuracy(const AlignerParams& model,
                                      const std::vector<std::vector<int>>& rows,
                                      const Vocabulary& vocab,
                                      const MaskingPlan& plan, Rng rng);

/// Fills the canonical word-representation table (corpus-mean contextual mu
/// per word, singleton-context fallback for words that never occur) and
/// marks the model frozen.
void freeze_aligner(AlignerParams& model, const std::vector<std::vector<int>>& rows);

/// Real representations for the discriminator: mu only, model must be frozen.
/// Returns [B, T, Er].
Tensor encode_representations(const AlignerParams& model,
                              const std::vector<std::vector<int>>& batch);

/// Argmax decode through F_LT with lowest-id tie-break; r is [N, Er].
std::vector<int> decode_words(const Tensor& w_lt, const Tensor& b_lt, const Tensor& r);

/// Mean absolute deviation of interpolation-decode counts from n_interp/2
/// over random non-reserved word pairs.
double balance_error(const AlignerParams& model, const Vocabulary& vocab,
                     std::size_t n_pairs, std::size_t n_interp, Rng& rng);

/// Corpus-level spread (max - min over occurring non-reserved words) of the
/// per-word mean sigma^2.
double word_variance_spread(const AlignerParams& model,
                            const std::vector<std::vector<int>>& rows);

/// Shared with the GAN: [tokens..., EOS, PAD...] rows of width max_len.
std::vector<std::vector<int>> encode_padded(const SentenceSet& set,
                                            const Vocabulary& vocab,
                                            std::size_t max_len);

}  // namespace rmgan
