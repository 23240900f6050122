#include "rmgan/aligner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rmgan/error.hpp"
#include "rmgan/optim.hpp"

namespace rmgan {

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t{{rows, cols}};
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

int draw_replacement(const Vocabulary& vocab, Rng& rng) {
  const std::size_t nr = vocab.reserved_count();
  if (vocab.size() <= nr) return Vocabulary::kMask;
  return static_cast<int>(nr + rng.uniform_index(vocab.size() - nr));
}

MaskAction draw_action(const MaskingPlan& plan, Rng& rng) {
  const double u = rng.uniform();
  if (u < plan.mask_frac) return MaskAction::kMask;
  if (u < plan.mask_frac + plan.random_frac) return MaskAction::kRandomReplace;
  return MaskAction::kKeepSelected;
}

void apply_action(MaskedBatch& out, std::size_t row, std::size_t pos, int original,
                  MaskAction action, const Vocabulary& vocab, Rng& rng) {
  int replacement = original;
  switch (action) {
    case MaskAction::kMask:
      replacement = Vocabulary::kMask;
      break;
    case MaskAction::kRandomReplace:
      replacement = draw_replacement(vocab, rng);
      break;
    case MaskAction::kKeepSelected:
      break;
  }
  out.corrupted[row][pos] = replacement;
  out.targets.push_back({row, pos, original, action});
}

}  // namespace

MaskedBatch mask_batch(const std::vector<std::vector<int>>& batch,
                       const Vocabulary& vocab, const MaskingPlan& plan, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("mask_batch: empty batch");
  if (plan.select_prob < 0.0 || plan.select_prob > 1.0 ||
      plan.mask_frac + plan.random_frac > 1.0) {
    throw std::invalid_argument("mask_batch: invalid plan");
  }
  MaskedBatch out;
  out.corrupted = batch;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto& row = batch[r];
    std::vector<std::size_t> nonpad;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] < 0 || static_cast<std::size_t>(row[k]) >= vocab.size()) {
        throw std::invalid_argument("mask_batch: token id out of range");
      }
      if (row[k] != Vocabulary::kPad) nonpad.push_back(k);
    }
    std::size_t selected = 0;
    for (std::size_t k : nonpad) {
      if (rng.uniform() < plan.select_prob) {
        apply_action(out, r, k, row[k], draw_action(plan, rng), vocab, rng);
        ++selected;
      }
    }
    if (selected == 0 && nonpad.size() >= plan.guarantee_min_len &&
        plan.select_prob > 0.0) {
      const std::size_t k = nonpad[rng.uniform_index(nonpad.size())];
      apply_action(out, r, k, row[k], draw_action(plan, rng), vocab, rng);
    }
  }
  return out;
}

AlignerParams AlignerParams::create(const AlignerConfig& cfg, Rng& rng) {
  if (cfg.vocab_size < Vocabulary::kNumReserved) {
    throw std::invalid_argument("aligner: vocab_size too small");
  }
  AlignerParams p;
  p.cfg = cfg;
  p.tok_emb = xavier(cfg.vocab_size, cfg.model_dim, rng);
  p.pos_emb = xavier(cfg.max_len, cfg.model_dim, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    p.blocks.push_back(EncoderBlockParams::create(cfg.encoder(), rng));
  }
  p.ln_final = LayerNormParams::unit(cfg.model_dim);
  p.w_mu = xavier(cfg.model_dim, cfg.repr_dim, rng);
  p.b_mu = Tensor{{cfg.repr_dim}};
  p.w_ls = xavier(cfg.model_dim, cfg.repr_dim, rng);
  // Start with small posterior variance so reconstruction sees mu clearly
  // before the KL term inflates sigma toward the prior.
  p.b_ls = Tensor::full({cfg.repr_dim}, -4.0);
  p.w_lt = xavier(cfg.repr_dim, cfg.vocab_size, rng);
  p.b_lt = Tensor{{cfg.vocab_size}};
  p.word_mu = Tensor{{cfg.vocab_size, cfg.repr_dim}};
  return p;
}

std::vector<std::pair<std::string, Tensor*>> AlignerParams::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("tok_emb", &tok_emb);
  out.emplace_back("pos_emb", &pos_emb);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    append_block_params(out, blocks[l], "block" + std::to_string(l));
  }
  out.emplace_back("ln_final.gain", &ln_final.gain);
  out.emplace_back("ln_final.bias", &ln_final.bias);
  out.emplace_back("w_mu", &w_mu);
  out.emplace_back("b_mu", &b_mu);
  out.emplace_back("w_ls", &w_ls);
  out.emplace_back("b_ls", &b_ls);
  out.emplace_back("w_lt", &w_lt);
  out.emplace_back("b_lt", &b_lt);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> AlignerParams::named_parameters() const {
  auto list = const_cast<AlignerParams*>(this)->named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(list.size());
  for (auto& [n, t] : list) out.emplace_back(n, t);
  return out;
}

AlignerGrads AlignerGrads::zeros_like(const AlignerParams& p) {
  AlignerGrads g;
  g.tok_emb = Tensor{p.tok_emb.shape()};
  g.pos_emb = Tensor{p.pos_emb.shape()};
  for (const auto& b : p.blocks) g.blocks.push_back(EncoderBlockGrads::zeros_like(b));
  g.ln_final = LayerNormGrads::zeros_like(p.ln_final);
  g.w_mu = Tensor{p.w_mu.shape()};
  g.b_mu = Tensor{p.b_mu.shape()};
  g.w_ls = Tensor{p.w_ls.shape()};
  g.b_ls = Tensor{p.b_ls.shape()};
  g.w_lt = Tensor{p.w_lt.shape()};
  g.b_lt = Tensor{p.b_lt.shape()};
  return g;
}

void AlignerGrads::zero() {
  tok_emb.zero();
  pos_emb.zero();
  for (auto& b : blocks) b.zero();
  ln_final.zero();
  for (Tensor* t : {&w_mu, &b_mu, &w_ls, &b_ls, &w_lt, &b_lt}) t->zero();
}

std::vector<std::pair<std::string, Tensor*>> AlignerGrads::named_grads() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("tok_emb", &tok_emb);
  out.emplace_back("pos_emb", &pos_emb);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    append_block_grads(out, blocks[l], "block" + std::to_string(l));
  }
  out.emplace_back("ln_final.gain", &ln_final.gain);
  out.emplace_back("ln_final.bias", &ln_final.bias);
  out.emplace_back("w_mu", &w_mu);
  out.emplace_back("b_mu", &b_mu);
  out.emplace_back("w_ls", &w_ls);
  out.emplace_back("b_ls", &b_ls);
  out.emplace_back("w_lt", &w_lt);
  out.emplace_back("b_lt", &b_lt);
  return out;
}

void aligner_forward(const AlignerParams& p,
                     const std::vector<std::vector<int>>& batch, bool training,
                     Rng* dropout_rng, Tensor& mu, Tensor& logvar,
                     AlignerForwardCache* cache) {
  if (batch.empty()) throw std::invalid_argument("aligner_forward: empty batch");
  const std::size_t t_len = p.cfg.max_len;
  const std::size_t b_n = batch.size();
  const std::size_t n = b_n * t_len;
  const std::size_t e = p.cfg.model_dim;

  std::vector<int> ids(n, Vocabulary::kPad);
  for (std::size_t b = 0; b < b_n; ++b) {
    if (batch[b].size() > t_len) {
      throw std::invalid_argument("aligner_forward: sentence longer than max_len");
    }
    for (std::size_t t = 0; t < batch[b].size(); ++t) {
      const int id = batch[b][t];
      if (id < 0 || static_cast<std::size_t>(id) >= p.cfg.vocab_size) {
        throw std::invalid_argument("aligner_forward: token id out of range");
      }
      ids[b * t_len + t] = id;
    }
  }
  std::vector<std::uint8_t> key_valid(n);
  for (std::size_t r = 0; r < n; ++r) key_valid[r] = ids[r] != Vocabulary::kPad;

  Tensor x{{n, e}};
  for (std::size_t r = 0; r < n; ++r) {
    const double* te = p.tok_emb.data() + static_cast<std::size_t>(ids[r]) * e;
    const double* pe = p.pos_emb.data() + (r % t_len) * e;
    double* xr = x.data() + r * e;
    for (std::size_t j = 0; j < e; ++j) xr[j] = te[j] + pe[j];
  }

  AlignerForwardCache local;
  AlignerForwardCache* cc = cache ? cache : &local;
  cc->layout = BatchLayout{b_n, t_len};
  cc->ids = std::move(ids);
  cc->key_valid = key_valid;

  const bool drop = training && p.cfg.dropout > 0.0;
  if (drop) {
    if (!dropout_rng) throw std::invalid_argument("aligner_forward: dropout requires rng");
    cc->emb_drop = scaled_dropout_mask(n, e, p.cfg.dropout, *dropout_rng);
    x.mul_inplace(cc->emb_drop);
  } else {
    cc->emb_drop = Tensor{};
  }

  cc->blocks.resize(p.blocks.size());
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    x = encoder_block_forward(p.blocks[l], p.cfg.encoder(), x, cc->layout,
                              cc->key_valid, training, dropout_rng, &cc->blocks[l]);
  }

  Tensor y = layer_norm(x, p.ln_final, &cc->ln_final);
  mu = affine(y, p.w_mu, p.b_mu, t_len);
  Tensor ls_raw = affine(y, p.w_ls, p.b_ls, t_len);
  logvar = ls_raw;
  for (std::size_t i = 0; i < logvar.size(); ++i) {
    logvar[i] = std::clamp(logvar[i], p.cfg.logvar_min, p.cfg.logvar_max);
  }
  mu.require_finite("aligner mu head");
  logvar.require_finite("aligner logvar head");
  if (cache) {
    cache->y = std::move(y);
    cache->ls_raw = std::move(ls_raw);
  }
}

void aligner_backward(const AlignerParams& p, const AlignerForwardCache& cache,
                      const Tensor& dmu, const Tensor& dlogvar, AlignerGrads& grads) {
  const std::size_t e = p.cfg.model_dim;
  const std::size_t n = cache.layout.rows();

  // Clamp gate on the log-variance path.
  Tensor dls = dlogvar;
  for (std::size_t i = 0; i < dls.size(); ++i) {
    if (cache.ls_raw[i] <= p.cfg.logvar_min || cache.ls_raw[i] >= p.cfg.logvar_max) {
      dls[i] = 0.0;
    }
  }

  Tensor dy{{n, e}}, tmp;
  affine_backward(cache.y, p.w_mu, dmu, &tmp, &grads.w_mu, &grads.b_mu);
  dy += tmp;
  affine_backward(cache.y, p.w_ls, dls, &tmp, &grads.w_ls, &grads.b_ls);
  dy += tmp;

  Tensor dx;
  layer_norm_backward(p.ln_final, cache.ln_final, dy, dx, &grads.ln_final.gain,
                      &grads.ln_final.bias);

  for (std::size_t l = p.blocks.size(); l-- > 0;) {
    Tensor dx_prev;
    encoder_block_backward(p.blocks[l], p.cfg.encoder(), cache.blocks[l],
                           cache.layout, dx, dx_prev, grads.blocks[l]);
    dx = std::move(dx_prev);
  }

  if (!cache.emb_drop.empty()) dx.mul_inplace(cache.emb_drop);
  const std::size_t t_len = cache.layout.time;
  for (std::size_t r = 0; r < n; ++r) {
    const double* g = dx.data() + r * e;
    double* te = grads.tok_emb.data() + static_cast<std::size_t>(cache.ids[r]) * e;
    double* pe = grads.pos_emb.data() + (r % t_len) * e;
    for (std::size_t j = 0; j < e; ++j) {
      te[j] += g[j];
      pe[j] += g[j];
    }
  }
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng,
                      ReparamCache* cache) {
  Tensor eps{mu.shape()};
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  return reparameterize_with(mu, logvar, eps, cache);
}

Tensor reparameterize_with(const Tensor& mu, const Tensor& logvar,
                           const Tensor& eps, ReparamCache* cache) {
  if (!mu.same_shape(logvar) || !mu.same_shape(eps)) {
    throw std::invalid_argument("reparameterize: shape mismatch");
  }
  Tensor sigma = logvar;
  for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = std::exp(0.5 * sigma[i]);
  Tensor z = mu;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += sigma[i] * eps[i];
  if (cache) {
    cache->eps = eps;
    cache->sigma = std::move(sigma);
  }
  return z;
}

void reparameterize_backward(const ReparamCache& cache, const Tensor& dz,
                             Tensor& dmu, Tensor& dlogvar) {
  dmu = dz;
  dlogvar = dz;
  for (std::size_t i = 0; i < dlogvar.size(); ++i) {
    dlogvar[i] *= 0.5 * cache.eps[i] * cache.sigma[i];
  }
}

AlignerLossParts aligner_loss(const Tensor& logits, const std::vector<int>& targets,
                              const Tensor& mu_t, const Tensor& logvar_t,
                              double lambda_a, AlignerLossCache* cache) {
  if (targets.empty()) {
    throw std::invalid_argument("aligner_loss: no target positions (loss undefined)");
  }
  if (lambda_a < 0.0) throw std::invalid_argument("aligner_loss: lambda_a must be >= 0");
  if (mu_t.rows() != targets.size() || !mu_t.same_shape(logvar_t)) {
    throw std::invalid_argument("aligner_loss: shape mismatch");
  }
  const std::size_t p_n = targets.size();
  const std::size_t d = mu_t.cols();

  AlignerLossParts parts;
  parts.recon = softmax_cross_entropy(logits, targets, cache ? &cache->ce : nullptr);
  double kl = 0.0, ls_sum = 0.0;
  for (std::size_t i = 0; i < mu_t.size(); ++i) {
    const double m = mu_t[i], lv = logvar_t[i];
    kl += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
    ls_sum += lv;
  }
  parts.kl = kl / static_cast<double>(p_n);
  parts.penalty = lambda_a * ls_sum / static_cast<double>(p_n * d);
  parts.total = parts.recon + parts.kl + parts.penalty;
  if (cache) {
    cache->mu = mu_t;
    cache->logvar = logvar_t;
    cache->lambda_a = lambda_a;
  }
  return parts;
}

void aligner_loss_backward(const AlignerLossCache& cache, Tensor& dlogits,
                           Tensor& dmu, Tensor& dlogvar) {
  const std::size_t p_n = cache.mu.rows();
  const std::size_t d = cache.mu.cols();
  dlogits = softmax_cross_entropy_backward(cache.ce);
  dmu = cache.mu;
  dmu *= 1.0 / static_cast<double>(p_n);
  dlogvar = cache.logvar;
  const double inv_p = 1.0 / static_cast<double>(p_n);
  const double pen = cache.lambda_a / static_cast<double>(p_n * d);
  for (std::size_t i = 0; i < dlogvar.size(); ++i) {
    dlogvar[i] = 0.5 * (std::exp(cache.logvar[i]) - 1.0) * inv_p + pen;
  }
}

std::vector<std::vector<int>> encode_padded(const SentenceSet& set,
                                            const Vocabulary& vocab,
                                            std::size_t max_len) {
  std::vector<std::vector<int>> rows;
  rows.reserve(set.size());
  for (const auto& sent : set.sentences) {
    std::vector<int> row;
    row.reserve(max_len);
    for (const auto& tok : sent) {
      if (row.size() + 1 >= max_len) break;  // leave room for [EOS]
      row.push_back(vocab.id(tok));
    }
    row.push_back(Vocabulary::kEos);
    row.resize(max_len, Vocabulary::kPad);
    rows.push_back(std::move(row));
  }
  return rows;
}

double masked_reconstruction_accuracy(const AlignerParams& model,
                                      const std::vector<std::vector<int>>& rows,
                                      const Vocabulary& vocab,
                                      const MaskingPlan& plan, Rng rng) {
  if (rows.empty()) return 0.0;
  std::size_t correct = 0, total = 0;
  const std::size_t t_len = model.cfg.max_len;
  const std::size_t chunk = 128;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t bn = std::min(chunk, rows.size() - start);
    std::vector<std::vector<int>> batch(rows.begin() + start, rows.begin() + start + bn);
    MaskedBatch masked = mask_batch(batch, vocab, plan, rng);
    if (masked.targets.empty()) continue;
    Tensor mu, lv;
    aligner_forward(model, masked.corrupted, false, nullptr, mu, lv);
    std::vector<std::size_t> target_rows;
    target_rows.reserve(masked.targets.size());
    for (const auto& t : masked.targets) target_rows.push_back(t.row * t_len + t.pos);
    Tensor mu_t = gather_rows(mu, target_rows);
    std::vector<int> decoded = decode_words(model.w_lt, model.b_lt, mu_t);
    for (std::size_t k = 0; k < masked.targets.size(); ++k) {
      correct += decoded[k] == masked.targets[k].original;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

void freeze_aligner(AlignerParams& model, const std::vector<std::vector<int>>& rows) {
  const std::size_t v = model.cfg.vocab_size;
  const std::size_t er = model.cfg.repr_dim;
  const std::size_t t_len = model.cfg.max_len;
  Tensor sums{{v, er}};
  std::vector<std::size_t> counts(v, 0);

  const std::size_t chunk = 128;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t bn = std::min(chunk, rows.size() - start);
    std::vector<std::vector<int>> batch(rows.begin() + start, rows.begin() + start + bn);
    Tensor mu, lv;
    AlignerForwardCache cache;
    aligner_forward(model, batch, false, nullptr, mu, lv, &cache);
    for (std::size_t r = 0; r < bn * t_len; ++r) {
      const int id = cache.ids[r];
      double* acc = sums.data() + static_cast<std::size_t>(id) * er;
      const double* m = mu.data() + r * er;
      for (std::size_t j = 0; j < er; ++j) acc[j] += m[j];
      ++counts[static_cast<std::size_t>(id)];
    }
  }

  model.word_mu = Tensor{{v, er}};
  std::vector<std::vector<int>> singleton(1);
  for (std::size_t w = 0; w < v; ++w) {
    if (counts[w] > 0) {
      for (std::size_t j = 0; j < er; ++j) {
        model.word_mu.at(w, j) = sums.at(w, j) / static_cast<double>(counts[w]);
      }
    } else {
      // Word never occurs in the corpus: encode it alone as a fallback.
      singleton[0] = {static_cast<int>(w)};
      Tensor mu, lv;
      aligner_forward(model, singleton, false, nullptr, mu, lv);
      for (std::size_t j = 0; j < er; ++j) model.word_mu.at(w, j) = mu.at(0, j);
    }
  }
  model.frozen = true;
}

AlignerTrainResult train_aligner(AlignerParams& model, const SentenceSet& corpus,
                                 const Vocabulary& vocab,
                                 const AlignerTrainConfig& cfg, Rng& rng) {
  if (vocab.size() != model.cfg.vocab_size) {
    throw std::invalid_argument("train_aligner: vocabulary size mismatch");
  }
  const auto rows = encode_padded(corpus, vocab, model.cfg.max_len);
  const std::size_t t_len = model.cfg.max_len;

  AdamW opt({cfg.lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay});
  AlignerGrads grads = AlignerGrads::zeros_like(model);
  auto params = model.named_parameters();
  auto grad_list = grads.named_grads();
  std::vector<Tensor*> param_ptrs;
  std::vector<const Tensor*> grad_ptrs;
  for (auto& [n, t] : params) param_ptrs.push_back(t);
  for (auto& [n, t] : grad_list) grad_ptrs.push_back(t);

  const Rng base = rng;
  const std::size_t eval_n = std::min(cfg.eval_sentences, rows.size());
  std::vector<std::vector<int>> eval_rows(rows.begin(), rows.begin() + eval_n);

  AlignerTrainResult result;
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = base.split("aligner.shuffle").split(epoch);
    Rng mask_rng = base.split("aligner.mask").split(epoch);
    Rng drop_rng = base.split("aligner.dropout").split(epoch);
    Rng eps_rng = base.split("aligner.eps").split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    }

    AlignerEpochStats stats;
    stats.epoch = epoch;
    std::size_t batches_used = 0;
    for (std::size_t start = 0; start < rows.size(); start += cfg.batch_size) {
      const std::size_t bn = std::min(cfg.batch_size, rows.size() - start);
      std::vector<std::vector<int>> batch;
      batch.reserve(bn);
      for (std::size_t k = 0; k < bn; ++k) batch.push_back(rows[order[start + k]]);

      MaskedBatch masked = mask_batch(batch, vocab, cfg.masking, mask_rng);
      if (masked.targets.empty()) continue;

      Tensor mu, lv;
      AlignerForwardCache cache;
      aligner_forward(model, masked.corrupted, true, &drop_rng, mu, lv, &cache);

      std::vector<std::size_t> target_rows;
      std::vector<int> target_ids;
      target_rows.reserve(masked.targets.size());
      for (const auto& t : masked.targets) {
        target_rows.push_back(t.row * t_len + t.pos);
        target_ids.push_back(t.original);
      }
      Tensor mu_t = gather_rows(mu, target_rows);
      Tensor lv_t = gather_rows(lv, target_rows);

      Tensor eps{mu_t.shape()};
      for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = eps_rng.normal();
      ReparamCache rep;
      Tensor z = reparameterize_with(mu_t, lv_t, eps, &rep);
      Tensor logits = affine(z, model.w_lt, model.b_lt);

      AlignerLossCache loss_cache;
      AlignerLossParts parts =
          aligner_loss(logits, target_ids, mu_t, lv_t, cfg.lambda_a, &loss_cache);
      if (!std::isfinite(parts.total)) {
        throw NumericError("train_aligner: loss diverged at epoch " +
                           std::to_string(epoch));
      }

      grads.zero();
      Tensor dlogits, dmu_loss, dlv_loss;
      aligner_loss_backward(loss_cache, dlogits, dmu_loss, dlv_loss);
      Tensor dz;
      affine_backward(z, model.w_lt, dlogits, &dz, &grads.w_lt, &grads.b_lt);
      Tensor dmu_rep, dlv_rep;
      reparameterize_backward(rep, dz, dmu_rep, dlv_rep);
      dmu_rep += dmu_loss;
      dlv_rep += dlv_loss;

      Tensor dmu_full{mu.shape()}, dlv_full{lv.shape()};
      scatter_add_rows(dmu_rep, target_rows, dmu_full);
      scatter_add_rows(dlv_rep, target_rows, dlv_full);
      aligner_backward(model, cache, dmu_full, dlv_full, grads);

      opt.step(param_ptrs, grad_ptrs);

      stats.loss += parts.total;
      stats.recon += parts.recon;
      stats.kl += parts.kl;
      stats.penalty += parts.penalty;
      ++batches_used;
    }
    if (batches_used > 0) {
      const double inv = 1.0 / static_cast<double>(batches_used);
      stats.loss *= inv;
      stats.recon *= inv;
      stats.kl *= inv;
      stats.penalty *= inv;
    }

    const bool last = epoch + 1 == cfg.max_epochs;
    if (cfg.eval_every > 0 && (epoch % cfg.eval_every == cfg.eval_every - 1 || last)) {
      stats.masked_accuracy = masked_reconstruction_accuracy(
          model, eval_rows, vocab, cfg.masking, base.split("aligner.eval"));
    }
    result.trace.push_back(stats);
    result.epochs_run = epoch + 1;
    if (cfg.target_accuracy > 0.0 && stats.masked_accuracy >= cfg.target_accuracy) {
      break;
    }
  }

  result.final_accuracy = masked_reconstruction_accuracy(
      model, eval_rows, vocab, cfg.masking, base.split("aligner.eval"));
  freeze_aligner(model, rows);
  return result;
}

Tensor encode_representations(const AlignerParams& model,
                              const std::vector<std::vector<int>>& batch) {
  if (!model.frozen) {
    throw std::logic_error("encode_representations: aligner must be frozen");
  }
  Tensor mu, lv;
  aligner_forward(model, batch, false, nullptr, mu, lv);
  return reshape(std::move(mu), {batch.size(), model.cfg.max_len, model.cfg.repr_dim});
}

std::vector<int> decode_words(const Tensor& w_lt, const Tensor& b_lt, const Tensor& r) {
  Tensor logits = affine(r, w_lt, b_lt);
  const std::size_t n = logits.rows(), v = logits.cols();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * v;
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j) {
      if (row[j] > row[best]) best = j;  // ties keep the lower id
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

double word_variance_spread(const AlignerParams& model,
                            const std::vector<std::vector<int>>& rows) {
  const std::size_t v = model.cfg.vocab_size;
  const std::size_t t_len = model.cfg.max_len;
  const std::size_t er = model.cfg.repr_dim;
  std::vector<double> sum(v, 0.0);
  std::vector<std::size_t> count(v, 0);
  const std::size_t chunk = 128;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t bn = std::min(chunk, rows.size() - start);
    std::vector<std::vector<int>> batch(rows.begin() + start, rows.begin() + start + bn);
    Tensor mu, lv;
    AlignerForwardCache cache;
    aligner_forward(model, batch, false, nullptr, mu, lv, &cache);
    for (std::size_t r = 0; r < bn * t_len; ++r) {
      const int id = cache.ids[r];
      if (id < Vocabulary::kNumReserved) continue;
      double mean_var = 0.0;
      const double* row = lv.data() + r * er;
      for (std::size_t j = 0; j < er; ++j) mean_var += std::exp(row[j]);
      sum[static_cast<std::size_t>(id)] += mean_var / static_cast<double>(er);
      ++count[static_cast<std::size_t>(id)];
    }
  }
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t w = 0; w < v; ++w) {
    if (count[w] == 0) continue;
    const double m = sum[w] / static_cast<double>(count[w]);
    if (first) {
      lo = hi = m;
      first = false;
    } else {
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  }
  return hi - lo;
}

double balance_error(const AlignerParams& model, const Vocabulary& vocab,
                     std::size_t n_pairs, std::size_t n_interp, Rng& rng) {
  if (!model.frozen) throw std::logic_error("balance_error: aligner must be frozen");
  const std::size_t nr = vocab.reserved_count();
  if (vocab.size() < nr + 2) {
    throw std::invalid_argument("balance_error: need at least two non-reserved words");
  }
  if (n_pairs < 1 || n_interp < 2) {
    throw std::invalid_argument("balance_error: need n_pairs >= 1 and n_interp >= 2");
  }
  const std::size_t er = model.cfg.repr_dim;
  const double expected = static_cast<double>(n_interp) / 2.0;
  double err_sum = 0.0;
  Tensor points{{n_interp, er}};
  for (std::size_t pair = 0; pair < n_pairs; ++pair) {
    std::size_t a = nr + rng.uniform_index(vocab.size() - nr);
    std::size_t b = a;
    while (b == a) b = nr + rng.uniform_index(vocab.size() - nr);
    const double* mu_a = model.word_mu.data() + a * er;
    const double* mu_b = model.word_mu.data() + b * er;
    for (std::size_t k = 0; k < n_interp; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(n_interp);
      double* row = points.data() + k * er;
      for (std::size_t j = 0; j < er; ++j) row[j] = mu_a[j] + t * (mu_b[j] - mu_a[j]);
    }
    const std::vector<int> decoded = decode_words(model.w_lt, model.b_lt, points);
    std::size_t times = 0;
    for (int id : decoded) times += id == static_cast<int>(a);
    err_sum += std::fabs(static_cast<double>(times) - expected);
  }
  return err_sum / static_cast<double>(n_pairs);
}

}  // namespace rmgan
