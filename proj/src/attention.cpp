#include "rmgan/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace rmgan {

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t{{rows, cols}};
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

void copy_head(const Tensor& src, std::size_t row0, std::size_t t_len,
               std::size_t col0, std::size_t dk, Tensor& dst) {
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* s = src.data() + (row0 + t) * src.cols() + col0;
    double* d = dst.data() + t * dk;
    for (std::size_t j = 0; j < dk; ++j) d[j] = s[j];
  }
}

void add_head(const Tensor& src, std::size_t row0, std::size_t t_len,
              std::size_t col0, std::size_t dk, Tensor& dst) {
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* s = src.data() + t * dk;
    double* d = dst.data() + (row0 + t) * dst.cols() + col0;
    for (std::size_t j = 0; j < dk; ++j) d[j] += s[j];
  }
}

}  // namespace

EncoderBlockParams EncoderBlockParams::create(const EncoderConfig& cfg, Rng& rng) {
  if (cfg.model_dim % cfg.heads != 0) {
    throw std::invalid_argument("encoder: model_dim must be divisible by heads");
  }
  const std::size_t e = cfg.model_dim, f = cfg.ffn_dim;
  EncoderBlockParams p;
  p.ln1 = LayerNormParams::unit(e);
  p.ln2 = LayerNormParams::unit(e);
  p.wq = xavier(e, e, rng);
  p.wk = xavier(e, e, rng);
  p.wv = xavier(e, e, rng);
  p.wo = xavier(e, e, rng);
  p.bq = Tensor{{e}};
  p.bk = Tensor{{e}};
  p.bv = Tensor{{e}};
  p.bo = Tensor{{e}};
  p.w1 = xavier(e, f, rng);
  p.b1 = Tensor{{f}};
  p.w2 = xavier(f, e, rng);
  p.b2 = Tensor{{e}};
  return p;
}

EncoderBlockGrads EncoderBlockGrads::zeros_like(const EncoderBlockParams& p) {
  EncoderBlockGrads g;
  g.ln1 = LayerNormGrads::zeros_like(p.ln1);
  g.ln2 = LayerNormGrads::zeros_like(p.ln2);
  g.wq = Tensor{p.wq.shape()};
  g.bq = Tensor{p.bq.shape()};
  g.wk = Tensor{p.wk.shape()};
  g.bk = Tensor{p.bk.shape()};
  g.wv = Tensor{p.wv.shape()};
  g.bv = Tensor{p.bv.shape()};
  g.wo = Tensor{p.wo.shape()};
  g.bo = Tensor{p.bo.shape()};
  g.w1 = Tensor{p.w1.shape()};
  g.b1 = Tensor{p.b1.shape()};
  g.w2 = Tensor{p.w2.shape()};
  g.b2 = Tensor{p.b2.shape()};
  return g;
}

void EncoderBlockGrads::zero() {
  ln1.zero();
  ln2.zero();
  for (Tensor* t : {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &w1, &b1, &w2, &b2}) {
    t->zero();
  }
}

Tensor encoder_block_forward(const EncoderBlockParams& p, const EncoderConfig& cfg,
                             const Tensor& x, const BatchLayout& layout,
                             const std::vector<std::uint8_t>& key_valid,
                             bool training, Rng* dropout_rng,
                             EncoderBlockCache* cache) {
  const std::size_t e = cfg.model_dim;
  const std::size_t nh = cfg.heads;
  const std::size_t dk = e / nh;
  const std::size_t t_len = layout.time;
  if (x.rows() != layout.rows() || x.cols() != e || key_valid.size() != layout.rows()) {
    throw std::invalid_argument("encoder_block_forward: shape mismatch");
  }
  const bool dropout_active = training && cfg.dropout > 0.0;
  if (dropout_active && !dropout_rng) {
    throw std::invalid_argument("encoder_block_forward: dropout requires an rng");
  }

  EncoderBlockCache local;
  EncoderBlockCache* cc = cache ? cache : &local;

  Tensor a = layer_norm(x, p.ln1, &cc->ln1);
  Tensor q = affine(a, p.wq, p.bq, t_len);
  Tensor k = affine(a, p.wk, p.bk, t_len);
  Tensor v = affine(a, p.wv, p.bv, t_len);

  Tensor heads_out{{layout.rows(), e}};
  cc->attn.clear();
  cc->attn.reserve(layout.batch * nh);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor qh{{t_len, dk}}, kh{{t_len, dk}}, vh{{t_len, dk}};
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const std::size_t row0 = b * t_len;
    bool any_valid = false;
    for (std::size_t s = 0; s < t_len; ++s) any_valid |= key_valid[row0 + s] != 0;
    for (std::size_t h = 0; h < nh; ++h) {
      copy_head(q, row0, t_len, h * dk, dk, qh);
      copy_head(k, row0, t_len, h * dk, dk, kh);
      copy_head(v, row0, t_len, h * dk, dk, vh);
      Tensor scores{{t_len, t_len}};
      gemm(false, true, inv_scale, qh, kh, 0.0, scores);
      if (any_valid) {
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t s = 0; s < t_len; ++s) {
            if (!key_valid[row0 + s]) scores.at(t, s) = -1e30;
          }
        }
      }
      Tensor probs = softmax_rows(scores);
      Tensor oh{{t_len, dk}};
      gemm(false, false, 1.0, probs, vh, 0.0, oh);
      add_head(oh, row0, t_len, h * dk, dk, heads_out);
      cc->attn.push_back(std::move(probs));
    }
  }

  Tensor att = affine(heads_out, p.wo, p.bo, t_len);
  if (dropout_active) {
    cc->attn_drop = scaled_dropout_mask(layout.rows(), e, cfg.dropout, *dropout_rng);
    att.mul_inplace(cc->attn_drop);
  } else {
    cc->attn_drop = Tensor{};
  }
  Tensor x2 = x;
  x2 += att;

  Tensor f = layer_norm(x2, p.ln2, &cc->ln2);
  Tensor g1 = affine(f, p.w1, p.b1, t_len);
  Tensor g2 = gelu(g1);
  Tensor g3 = affine(g2, p.w2, p.b2, t_len);
  if (dropout_active) {
    cc->ffn_drop = scaled_dropout_mask(layout.rows(), e, cfg.dropout, *dropout_rng);
    g3.mul_inplace(cc->ffn_drop);
  } else {
    cc->ffn_drop = Tensor{};
  }
  Tensor out = x2;
  out += g3;
  out.require_finite("encoder block output");

  if (cache) {
    cache->a = std::move(a);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->heads_out = std::move(heads_out);
    cache->x2 = std::move(x2);
    cache->f = std::move(f);
    cache->g1 = std::move(g1);
    cache->g2 = std::move(g2);
  }
  return out;
}

void encoder_block_backward(const EncoderBlockParams& p, const EncoderConfig& cfg,
                            const EncoderBlockCache& cache, const BatchLayout& layout,
                            const Tensor& d_out, Tensor& d_x,
                            EncoderBlockGrads& grads) {
  const std::size_t e = cfg.model_dim;
  const std::size_t nh = cfg.heads;
  const std::size_t dk = e / nh;
  const std::size_t t_len = layout.time;
  if (d_out.rows() != layout.rows() || d_out.cols() != e) {
    throw std::invalid_argument("encoder_block_backward: shape mismatch");
  }

  // FFN residual: out = x2 + drop(FFN(LN2(x2))).
  Tensor dg3 = d_out;
  if (!cache.ffn_drop.empty()) dg3.mul_inplace(cache.ffn_drop);
  Tensor dg2, df;
  affine_backward(cache.g2, p.w2, dg3, &dg2, &grads.w2, &grads.b2);
  Tensor dg1 = gelu_backward(cache.g1, dg2);
  affine_backward(cache.f, p.w1, dg1, &df, &grads.w1, &grads.b1);
  Tensor dx2;
  layer_norm_backward(p.ln2, cache.ln2, df, dx2, &grads.ln2.gain, &grads.ln2.bias);
  dx2 += d_out;

  // Attention residual: x2 = x + drop(Wo * heads).
  Tensor datt = dx2;
  if (!cache.attn_drop.empty()) datt.mul_inplace(cache.attn_drop);
  Tensor dheads;
  affine_backward(cache.heads_out, p.wo, datt, &dheads, &grads.wo, &grads.bo);

  Tensor dq{{layout.rows(), e}}, dk_t{{layout.rows(), e}}, dv{{layout.rows(), e}};
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor qh{{t_len, dk}}, kh{{t_len, dk}}, vh{{t_len, dk}}, doh{{t_len, dk}};
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const std::size_t row0 = b * t_len;
    for (std::size_t h = 0; h < nh; ++h) {
      const Tensor& probs = cache.attn[b * nh + h];
      copy_head(cache.q, row0, t_len, h * dk, dk, qh);
      copy_head(cache.k, row0, t_len, h * dk, dk, kh);
      copy_head(cache.v, row0, t_len, h * dk, dk, vh);
      copy_head(dheads, row0, t_len, h * dk, dk, doh);

      Tensor dprobs{{t_len, t_len}};
      gemm(false, true, 1.0, doh, vh, 0.0, dprobs);
      Tensor dvh{{t_len, dk}};
      gemm(true, false, 1.0, probs, doh, 0.0, dvh);

      // Row-wise softmax backward.
      Tensor dscores{{t_len, t_len}};
      for (std::size_t t = 0; t < t_len; ++t) {
        const double* pr = probs.data() + t * t_len;
        const double* dp = dprobs.data() + t * t_len;
        double dot = 0.0;
        for (std::size_t s = 0; s < t_len; ++s) dot += pr[s] * dp[s];
        double* ds = dscores.data() + t * t_len;
        for (std::size_t s = 0; s < t_len; ++s) ds[s] = pr[s] * (dp[s] - dot);
      }

      Tensor dqh{{t_len, dk}}, dkh{{t_len, dk}};
      gemm(false, false, inv_scale, dscores, kh, 0.0, dqh);
      gemm(true, false, inv_scale, dscores, qh, 0.0, dkh);
      add_head(dqh, row0, t_len, h * dk, dk, dq);
      add_head(dkh, row0, t_len, h * dk, dk, dk_t);
      add_head(dvh, row0, t_len, h * dk, dk, dv);
    }
  }

  Tensor da{{layout.rows(), e}};
  Tensor tmp;
  affine_backward(cache.a, p.wq, dq, &tmp, &grads.wq, &grads.bq);
  da += tmp;
  affine_backward(cache.a, p.wk, dk_t, &tmp, &grads.wk, &grads.bk);
  da += tmp;
  affine_backward(cache.a, p.wv, dv, &tmp, &grads.wv, &grads.bv);
  da += tmp;

  layer_norm_backward(p.ln1, cache.ln1, da, d_x, &grads.ln1.gain, &grads.ln1.bias);
  d_x += dx2;
}

void append_block_params(std::vector<std::pair<std::string, Tensor*>>& out,
                         EncoderBlockParams& p, const std::string& prefix) {
  out.emplace_back(prefix + ".ln1.gain", &p.ln1.gain);
  out.emplace_back(prefix + ".ln1.bias", &p.ln1.bias);
  out.emplace_back(prefix + ".ln2.gain", &p.ln2.gain);
  out.emplace_back(prefix + ".ln2.bias", &p.ln2.bias);
  out.emplace_back(prefix + ".wq", &p.wq);
  out.emplace_back(prefix + ".bq", &p.bq);
  out.emplace_back(prefix + ".wk", &p.wk);
  out.emplace_back(prefix + ".bk", &p.bk);
  out.emplace_back(prefix + ".wv", &p.wv);
  out.emplace_back(prefix + ".bv", &p.bv);
  out.emplace_back(prefix + ".wo", &p.wo);
  out.emplace_back(prefix + ".bo", &p.bo);
  out.emplace_back(prefix + ".w1", &p.w1);
  out.emplace_back(prefix + ".b1", &p.b1);
  out.emplace_back(prefix + ".w2", &p.w2);
  out.emplace_back(prefix + ".b2", &p.b2);
}

void append_block_grads(std::vector<std::pair<std::string, Tensor*>>& out,
                        EncoderBlockGrads& g, const std::string& prefix) {
  out.emplace_back(prefix + ".ln1.gain", &g.ln1.gain);
  out.emplace_back(prefix + ".ln1.bias", &g.ln1.bias);
  out.emplace_back(prefix + ".ln2.gain", &g.ln2.gain);
  out.emplace_back(prefix + ".ln2.bias", &g.ln2.bias);
  out.emplace_back(prefix + ".wq", &g.wq);
  out.emplace_back(prefix + ".bq", &g.bq);
  out.emplace_back(prefix + ".wk", &g.wk);
  out.emplace_back(prefix + ".bk", &g.bk);
  out.emplace_back(prefix + ".wv", &g.wv);
  out.emplace_back(prefix + ".bv", &g.bv);
  out.emplace_back(prefix + ".wo", &g.wo);
  out.emplace_back(prefix + ".bo", &g.bo);
  out.emplace_back(prefix + ".w1", &g.w1);
  out.emplace_back(prefix + ".b1", &g.b1);
  out.emplace_back(prefix + ".w2", &g.w2);
  out.emplace_back(prefix + ".b2", &g.b2);
}

}  // namespace rmgan
