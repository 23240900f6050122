#include "rmgan/lstm.hpp"

#include <cmath>
#include <stdexcept>

#include "rmgan/error.hpp"

namespace rmgan {

namespace {

bool uses_proj_ln(LstmVariant v) { return v != LstmVariant::kVanilla; }
bool uses_cell_ln(LstmVariant v) { return v != LstmVariant::kVanilla; }
bool uses_out_ln(LstmVariant v) { return v == LstmVariant::kFullyNormalized; }

// Gate block ordering along the 4H axis: (f, i, o, c-hat).
enum GateBlock { kF = 0, kI = 1, kO = 2, kChat = 3 };

Tensor gate_block(const Tensor& a, std::size_t h, GateBlock blk) {
  const std::size_t b = a.rows();
  Tensor out{{b, h}};
  for (std::size_t r = 0; r < b; ++r) {
    const double* src = a.data() + r * 4 * h + static_cast<std::size_t>(blk) * h;
    double* dst = out.data() + r * h;
    for (std::size_t j = 0; j < h; ++j) dst[j] = src[j];
  }
  return out;
}

void scatter_gate_block(const Tensor& g, std::size_t h, GateBlock blk, Tensor& a) {
  const std::size_t b = g.rows();
  for (std::size_t r = 0; r < b; ++r) {
    const double* src = g.data() + r * h;
    double* dst = a.data() + r * 4 * h + static_cast<std::size_t>(blk) * h;
    for (std::size_t j = 0; j < h; ++j) dst[j] = src[j];
  }
}

Tensor uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t{{rows, cols}};
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

void push_ln_params(std::vector<std::pair<std::string, Tensor*>>& out,
                    LayerNormParams& p, const std::string& name) {
  out.emplace_back(name + ".gain", &p.gain);
  out.emplace_back(name + ".bias", &p.bias);
}

}  // namespace

std::string variant_name(LstmVariant v) {
  switch (v) {
    case LstmVariant::kVanilla: return "vanilla";
    case LstmVariant::kLayerNorm: return "layernorm";
    case LstmVariant::kFullyNormalized: return "fully_normalized";
  }
  return "unknown";
}

LstmVariant variant_from_name(const std::string& name) {
  if (name == "vanilla") return LstmVariant::kVanilla;
  if (name == "layernorm") return LstmVariant::kLayerNorm;
  if (name == "fully_normalized") return LstmVariant::kFullyNormalized;
  throw std::invalid_argument("unknown LSTM variant: " + name);
}

LstmCellGrads LstmCellGrads::zeros_like(const LstmCellParams& p) {
  LstmCellGrads g;
  g.w_h = Tensor{p.w_h.shape()};
  g.w_x = Tensor{p.w_x.shape()};
  g.b = Tensor{p.b.shape()};
  g.ln_h = {Tensor{p.ln_h.gain.shape()}, Tensor{p.ln_h.bias.shape()}};
  g.ln_x = {Tensor{p.ln_x.gain.shape()}, Tensor{p.ln_x.bias.shape()}};
  g.ln_c = {Tensor{p.ln_c.gain.shape()}, Tensor{p.ln_c.bias.shape()}};
  g.ln_out = {Tensor{p.ln_out.gain.shape()}, Tensor{p.ln_out.bias.shape()}};
  return g;
}

void LstmCellGrads::zero() {
  w_h.zero();
  w_x.zero();
  b.zero();
  for (LayerNormGrads* g : {&ln_h, &ln_x, &ln_c, &ln_out}) {
    g->gain.zero();
    g->bias.zero();
  }
}

LstmState LstmState::zeros(std::size_t batch, std::size_t hidden) {
  LstmState s;
  s.h = Tensor{{batch, hidden}};
  s.c = Tensor{{batch, hidden}};
  return s;
}

LstmState cell_forward(LstmVariant variant, const LstmCellParams& params,
                       const Tensor& x, const LstmState& state,
                       LstmCellCache* cache) {
  const std::size_t h = params.hidden_dim();
  const std::size_t batch = x.rows();
  if (x.cols() != params.input_dim() || state.h.cols() != h ||
      state.h.rows() != batch || !state.h.same_shape(state.c)) {
    throw std::invalid_argument("cell_forward: shape mismatch");
  }

  Tensor ph{{batch, 4 * h}}, px{{batch, 4 * h}};
  gemm(false, false, 1.0, state.h, params.w_h, 0.0, ph);
  gemm(false, false, 1.0, x, params.w_x, 0.0, px);

  LstmCellCache local;
  LstmCellCache* cc = cache ? cache : &local;

  if (uses_proj_ln(variant)) {
    ph = layer_norm(ph, params.ln_h, &cc->ln_h);
    px = layer_norm(px, params.ln_x, &cc->ln_x);
  }

  Tensor a = ph;
  a += px;
  add_row_broadcast(a, params.b);
  a.require_finite("gate preactivations");

  Tensor f = sigmoid(gate_block(a, h, kF));
  Tensor i = sigmoid(gate_block(a, h, kI));
  Tensor o = sigmoid(gate_block(a, h, kO));
  Tensor chat = tanh_op(gate_block(a, h, kChat));

  Tensor v = hadamard(f, state.c);
  Tensor ichat = hadamard(i, chat);
  v += ichat;

  Tensor c_new = uses_cell_ln(variant) ? layer_norm(v, params.ln_c, &cc->ln_c)
                                       : std::move(v);
  c_new.require_finite("cell state");

  Tensor tanh_c = tanh_op(c_new);
  Tensor u = hadamard(o, tanh_c);
  Tensor h_new = uses_out_ln(variant) ? layer_norm(u, params.ln_out, &cc->ln_out)
                                      : u;
  h_new.require_finite("hidden state");

  if (cache) {
    cache->x = x;
    cache->h_prev = state.h;
    cache->c_prev = state.c;
    cache->f = std::move(f);
    cache->i = std::move(i);
    cache->o = std::move(o);
    cache->chat = std::move(chat);
    cache->tanh_c = std::move(tanh_c);
    cache->c_new = c_new;
  }

  LstmState next;
  next.h = std::move(h_new);
  next.c = std::move(c_new);
  return next;
}

void cell_backward(LstmVariant variant, const LstmCellParams& params,
                   const LstmCellCache& cache, const Tensor& dh,
                   const Tensor& dc, Tensor& dx, LstmState& d_state,
                   LstmCellGrads& grads) {
  const std::size_t h = params.hidden_dim();
  const std::size_t batch = cache.x.rows();
  if (!dh.same_shape(cache.f) || !dc.same_shape(cache.f)) {
    throw std::invalid_argument("cell_backward: cache/gradient shape mismatch");
  }

  // Hidden-state path: h = LN(o * tanh(c)) or o * tanh(c).
  Tensor du;
  if (uses_out_ln(variant)) {
    layer_norm_backward(params.ln_out, cache.ln_out, dh, du, &grads.ln_out.gain,
                        &grads.ln_out.bias);
  } else {
    du = dh;
  }
  Tensor d_o = hadamard(du, cache.tanh_c);
  Tensor dtanh = hadamard(du, cache.o);
  Tensor dc_total = dc;
  for (std::size_t k = 0; k < dc_total.size(); ++k) {
    dc_total[k] += dtanh[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
  }

  // Cell-state path: c = LN(f*c_prev + i*chat) or the bare sum.
  Tensor dv;
  if (uses_cell_ln(variant)) {
    layer_norm_backward(params.ln_c, cache.ln_c, dc_total, dv, &grads.ln_c.gain,
                        &grads.ln_c.bias);
  } else {
    dv = std::move(dc_total);
  }
  Tensor df = hadamard(dv, cache.c_prev);
  d_state.c = hadamard(dv, cache.f);
  Tensor di = hadamard(dv, cache.chat);
  Tensor dchat = hadamard(dv, cache.i);

  // Through the gate nonlinearities into preactivation blocks.
  Tensor da{{batch, 4 * h}};
  scatter_gate_block(sigmoid_backward(cache.f, df), h, kF, da);
  scatter_gate_block(sigmoid_backward(cache.i, di), h, kI, da);
  scatter_gate_block(sigmoid_backward(cache.o, d_o), h, kO, da);
  scatter_gate_block(tanh_backward(cache.chat, dchat), h, kChat, da);

  accumulate_column_sums(da, grads.b);

  Tensor dph, dpx;
  if (uses_proj_ln(variant)) {
    layer_norm_backward(params.ln_h, cache.ln_h, da, dph, &grads.ln_h.gain,
                        &grads.ln_h.bias);
    layer_norm_backward(params.ln_x, cache.ln_x, da, dpx, &grads.ln_x.gain,
                        &grads.ln_x.bias);
  } else {
    dph = da;
    dpx = std::move(da);
  }

  // ph = h_prev W_h, px = x W_x.
  gemm(true, false, 1.0, cache.h_prev, dph, 1.0, grads.w_h);
  d_state.h = Tensor{{batch, h}};
  gemm(false, true, 1.0, dph, params.w_h, 0.0, d_state.h);
  gemm(true, false, 1.0, cache.x, dpx, 1.0, grads.w_x);
  dx = Tensor{{batch, params.input_dim()}};
  gemm(false, true, 1.0, dpx, params.w_x, 0.0, dx);
}

LstmStack LstmStack::create(LstmVariant variant, std::size_t input_dim,
                            std::size_t hidden_dim, std::size_t depth, Rng& rng) {
  if (depth == 0) throw std::invalid_argument("LstmStack: depth must be >= 1");
  LstmStack stack;
  stack.variant = variant;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden_dim;
    LstmCellParams p;
    p.w_h = uniform_init(hidden_dim, 4 * hidden_dim, rng);
    p.w_x = uniform_init(in, 4 * hidden_dim, rng);
    p.b = Tensor{{4 * hidden_dim}};
    // Forget-gate bias starts at +1, the rest at 0.
    for (std::size_t j = 0; j < hidden_dim; ++j) p.b[j] = 1.0;
    p.ln_h = LayerNormParams::unit(4 * hidden_dim);
    p.ln_x = LayerNormParams::unit(4 * hidden_dim);
    p.ln_c = LayerNormParams::unit(hidden_dim);
    p.ln_out = LayerNormParams::unit(hidden_dim);
    stack.layers.push_back(std::move(p));
  }
  return stack;
}

std::vector<std::pair<std::string, Tensor*>> LstmStack::named_parameters(
    const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    LstmCellParams& p = layers[l];
    out.emplace_back(base + ".w_h", &p.w_h);
    out.emplace_back(base + ".w_x", &p.w_x);
    out.emplace_back(base + ".b", &p.b);
    if (uses_proj_ln(variant)) {
      push_ln_params(out, p.ln_h, base + ".ln_h");
      push_ln_params(out, p.ln_x, base + ".ln_x");
      push_ln_params(out, p.ln_c, base + ".ln_c");
    }
    if (uses_out_ln(variant)) {
      push_ln_params(out, p.ln_out, base + ".ln_out");
    }
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> LstmStack::named_parameters(
    const std::string& prefix) const {
  auto mutable_list = const_cast<LstmStack*>(this)->named_parameters(prefix);
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_list.size());
  for (auto& [name, t] : mutable_list) out.emplace_back(name, t);
  return out;
}

LstmStackGrads LstmStackGrads::zeros_like(const LstmStack& stack) {
  LstmStackGrads g;
  for (const LstmCellParams& p : stack.layers) {
    g.layers.push_back(LstmCellGrads::zeros_like(p));
  }
  return g;
}

void LstmStackGrads::zero() {
  for (LstmCellGrads& g : layers) g.zero();
}

std::vector<std::pair<std::string, Tensor*>> LstmStackGrads::named_grads(
    const LstmStack& stack) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = ".layer" + std::to_string(l);
    LstmCellGrads& g = layers[l];
    out.emplace_back(base + ".w_h", &g.w_h);
    out.emplace_back(base + ".w_x", &g.w_x);
    out.emplace_back(base + ".b", &g.b);
    if (uses_proj_ln(stack.variant)) {
      out.emplace_back(base + ".ln_h.gain", &g.ln_h.gain);
      out.emplace_back(base + ".ln_h.bias", &g.ln_h.bias);
      out.emplace_back(base + ".ln_x.gain", &g.ln_x.gain);
      out.emplace_back(base + ".ln_x.bias", &g.ln_x.bias);
      out.emplace_back(base + ".ln_c.gain", &g.ln_c.gain);
      out.emplace_back(base + ".ln_c.bias", &g.ln_c.bias);
    }
    if (uses_out_ln(stack.variant)) {
      out.emplace_back(base + ".ln_out.gain", &g.ln_out.gain);
      out.emplace_back(base + ".ln_out.bias", &g.ln_out.bias);
    }
  }
  return out;
}

LstmStackState LstmStackState::zeros(const LstmStack& stack, std::size_t batch) {
  LstmStackState s;
  for (const LstmCellParams& p : stack.layers) {
    s.layers.push_back(LstmState::zeros(batch, p.hidden_dim()));
  }
  return s;
}

Tensor stack_step(const LstmStack& stack, const Tensor& x, LstmStackState& state,
                  LstmStackCache* cache) {
  if (cache) cache->steps.emplace_back();
  Tensor input = x;
  for (std::size_t l = 0; l < stack.depth(); ++l) {
    LstmCellCache* cc = nullptr;
    if (cache) {
      cache->steps.back().emplace_back();
      cc = &cache->steps.back().back();
    }
    state.layers[l] = cell_forward(stack.variant, stack.layers[l], input,
                                   state.layers[l], cc);
    input = state.layers[l].h;
  }
  return input;
}

std::vector<std::vector<Tensor>> stack_forward(const LstmStack& stack,
                                               const std::vector<Tensor>& inputs,
                                               LstmStackCache* cache) {
  if (inputs.empty()) throw std::invalid_argument("stack_forward: empty input sequence");
  const std::size_t batch = inputs.front().rows();
  LstmStackState state = LstmStackState::zeros(stack, batch);
  std::vector<std::vector<Tensor>> hs(stack.depth());
  for (const Tensor& x : inputs) {
    stack_step(stack, x, state, cache);
    for (std::size_t l = 0; l < stack.depth(); ++l) {
      hs[l].push_back(state.layers[l].h);
    }
  }
  return hs;
}

void stack_backward(const LstmStack& stack, const LstmStackCache& cache,
                    const std::vector<Tensor>& d_h_last,
                    std::vector<Tensor>* d_inputs, LstmStackGrads& grads) {
  const std::size_t time = cache.steps.size();
  const std::size_t depth = stack.depth();
  if (d_h_last.size() != time) {
    throw std::invalid_argument("stack_backward: gradient sequence length mismatch");
  }
  const std::size_t batch = d_h_last.front().rows();

  // Running state gradients per layer (from the future step).
  std::vector<LstmState> d_state(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    d_state[l] = LstmState::zeros(batch, stack.layers[l].hidden_dim());
  }
  if (d_inputs) d_inputs->assign(time, Tensor{});

  for (std::size_t ti = time; ti-- > 0;) {
    // Gradient flowing into each layer's hidden output at this step.
    Tensor d_from_above = d_h_last[ti];
    for (std::size_t l = depth; l-- > 0;) {
      Tensor dh = d_state[l].h;
      dh += d_from_above;
      Tensor dc = d_state[l].c;
      Tensor dx;
      LstmState d_prev;
      cell_backward(stack.variant, stack.layers[l], cache.steps[ti][l], dh, dc,
                    dx, d_prev, grads.layers[l]);
      d_state[l] = std::move(d_prev);
      if (l == 0) {
        if (d_inputs) (*d_inputs)[ti] = std::move(dx);
      } else {
        d_from_above = std::move(dx);
      }
    }
  }
}

std::vector<double> grad_norm_probe(const LstmStack& stack, const ProbeLoss& loss_fn,
                                    const std::vector<std::vector<Tensor>>& batches,
                                    std::size_t n_batches) {
  if (n_batches < 1 || batches.size() < n_batches) {
    throw std::invalid_argument("grad_norm_probe: need n_batches >= 1 prepared batches");
  }
  std::vector<double> norms;
  norms.reserve(n_batches);
  LstmStackGrads grads = LstmStackGrads::zeros_like(stack);
  for (std::size_t bi = 0; bi < n_batches; ++bi) {
    LstmStackCache cache;
    auto hs = stack_forward(stack, batches[bi], &cache);
    std::vector<Tensor> d_h(hs.back().size());
    const double loss = loss_fn(hs.back(), d_h);
    if (!std::isfinite(loss)) throw NumericError("grad_norm_probe: non-finite loss");
    grads.zero();
    stack_backward(stack, cache, d_h, nullptr, grads);
    norms.push_back(grads.layers.back().w_x.frobenius_norm());
  }
  return norms;
}

}  // namespace rmgan
