#include "rmgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rmgan/error.hpp"

namespace rmgan {

namespace {

// Views a 1-D tensor as a single row; 2-D passes through.
void rows_cols(const Tensor& x, std::size_t& n, std::size_t& h) {
  if (x.ndim() == 1) {
    n = 1;
    h = x.size();
  } else if (x.ndim() == 2) {
    n = x.rows();
    h = x.cols();
  } else {
    throw std::invalid_argument("expected 1-D or 2-D tensor");
  }
}

}  // namespace

LayerNormParams LayerNormParams::unit(std::size_t h, double epsilon) {
  LayerNormParams p;
  p.gain = Tensor::full({h}, 1.0);
  p.bias = Tensor::zeros({h});
  p.epsilon = epsilon;
  return p;
}

LayerNormGrads LayerNormGrads::zeros_like(const LayerNormParams& p) {
  return {Tensor{p.gain.shape()}, Tensor{p.bias.shape()}};
}

void LayerNormGrads::zero() {
  gain.zero();
  bias.zero();
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p, LayerNormCache* cache) {
  std::size_t n, h;
  rows_cols(x, n, h);
  if (h < 2) throw std::invalid_argument("layer_norm: normalized dim must be >= 2");
  if (p.gain.size() != h || p.bias.size() != h) {
    throw std::invalid_argument("layer_norm: gain/bias length != normalized dim");
  }
  if (p.epsilon < 0.0) throw std::invalid_argument("layer_norm: negative epsilon");

  Tensor y = x;
  Tensor xhat{x.shape()};
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data() + i * h;
    double* yr = y.data() + i * h;
    double* xh = xhat.data() + i * h;
    double mean = 0.0;
    for (std::size_t j = 0; j < h; ++j) mean += xr[j];
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(h);
    if (var + p.epsilon <= 0.0) {
      throw NumericError("layer_norm: degenerate constant input with zero epsilon");
    }
    const double inv = 1.0 / std::sqrt(var + p.epsilon);
    inv_std[i] = inv;
    for (std::size_t j = 0; j < h; ++j) {
      xh[j] = (xr[j] - mean) * inv;
      yr[j] = p.gain[j] * xh[j] + p.bias[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

void layer_norm_backward(const LayerNormParams& p, const LayerNormCache& cache,
                         const Tensor& dy, Tensor& dx, Tensor* dgain, Tensor* dbias) {
  std::size_t n, h;
  rows_cols(dy, n, h);
  if (!cache.xhat.same_shape(dy) || cache.inv_std.size() != n) {
    throw std::invalid_argument("layer_norm_backward: cache/gradient shape mismatch");
  }
  dx = Tensor{dy.shape()};
  for (std::size_t i = 0; i < n; ++i) {
    const double* dyr = dy.data() + i * h;
    const double* xh = cache.xhat.data() + i * h;
    double* dxr = dx.data() + i * h;
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double dxh = dyr[j] * p.gain[j];
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xh[j];
    }
    mean_dxhat /= static_cast<double>(h);
    mean_dxhat_xhat /= static_cast<double>(h);
    const double inv = cache.inv_std[i];
    for (std::size_t j = 0; j < h; ++j) {
      const double dxh = dyr[j] * p.gain[j];
      dxr[j] = inv * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
    }
    if (dgain) {
      for (std::size_t j = 0; j < h; ++j) (*dgain)[j] += dyr[j] * xh[j];
    }
    if (dbias) {
      for (std::size_t j = 0; j < h; ++j) (*dbias)[j] += dyr[j];
    }
  }
}

double ln_gradient_factor_probe(std::size_t h, double sigma_target, int trials,
                                Rng& rng) {
  if (h < 64) throw std::invalid_argument("ln_gradient_factor_probe: H must be >= 64");
  if (sigma_target <= 0.0) {
    throw std::invalid_argument("ln_gradient_factor_probe: sigma_target must be positive");
  }
  if (trials < 1) throw std::invalid_argument("ln_gradient_factor_probe: trials must be >= 1");

  const LayerNormParams p = LayerNormParams::unit(h);
  double acc = 0.0;
  for (int t = 0; t < trials; ++t) {
    Tensor x{{h}};
    double mean = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      x[j] = rng.normal();
      mean += x[j];
    }
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(h);
    const double scale = sigma_target / std::sqrt(var);
    for (std::size_t j = 0; j < h; ++j) x[j] = (x[j] - mean) * scale;

    LayerNormCache cache;
    layer_norm(x, p, &cache);
    // Mean Jacobian diagonal, one backward pass per basis vector.
    Tensor e{{h}}, dx;
    double diag_sum = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      e.zero();
      e[j] = 1.0;
      layer_norm_backward(p, cache, e, dx);
      diag_sum += dx[j];
    }
    acc += diag_sum / static_cast<double>(h);
  }
  return acc / static_cast<double>(trials);
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t row_block) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.cols() != w.rows() || b.size() != w.cols()) {
    throw std::invalid_argument("affine: shape mismatch: x" + shape_to_string(x.shape()) +
                                " W" + shape_to_string(w.shape()));
  }
  Tensor y{{x.rows(), w.cols()}};
  if (row_block == 0 || row_block >= x.rows()) {
    gemm(false, false, 1.0, x, w, 0.0, y);
  } else {
    const std::size_t in = x.cols(), out = w.cols();
    Tensor xb{{row_block, in}}, yb{{row_block, out}};
    for (std::size_t start = 0; start < x.rows(); start += row_block) {
      const std::size_t n = std::min(row_block, x.rows() - start);
      if (n != xb.rows()) {
        xb = Tensor{{n, in}};
        yb = Tensor{{n, out}};
      }
      std::copy(x.data() + start * in, x.data() + (start + n) * in, xb.data());
      gemm(false, false, 1.0, xb, w, 0.0, yb);
      std::copy(yb.data(), yb.data() + n * out, y.data() + start * out);
    }
  }
  add_row_broadcast(y, b);
  return y;
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     Tensor* dx, Tensor* dw, Tensor* db) {
  if (dy.ndim() != 2 || dy.rows() != x.rows() || dy.cols() != w.cols()) {
    throw std::invalid_argument("affine_backward: shape mismatch");
  }
  if (dx) {
    if (!dx->same_shape(x)) *dx = Tensor{x.shape()};
    gemm(false, true, 1.0, dy, w, 0.0, *dx);
  }
  if (dw) gemm(true, false, 1.0, x, dy, 1.0, *dw);
  if (db) accumulate_column_sums(dy, *db);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = y[i];
    y[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                    : std::exp(v) / (1.0 + std::exp(v));
  }
  return y;
}

Tensor tanh_op(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
  return y;
}

namespace {
// tanh-form GELU constants
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = y[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (1.0 - y[i]);
  return dx;
}

Tensor tanh_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - y[i] * y[i];
  return dx;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double v = x[i];
    const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    dx[i] *= 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
  }
  return dx;
}

double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                             SoftmaxCeCache* cache) {
  if (logits.ndim() != 2 || logits.rows() != targets.size()) {
    throw std::invalid_argument("softmax_cross_entropy: logits/targets mismatch");
  }
  const std::size_t n = logits.rows(), v = logits.cols();
  Tensor probs = softmax_rows(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw std::invalid_argument("softmax_cross_entropy: target index out of range");
    }
    loss -= std::log(std::max(probs.at(i, static_cast<std::size_t>(t)), 1e-300));
  }
  loss /= static_cast<double>(n);
  if (cache) {
    cache->probs = std::move(probs);
    cache->targets = targets;
  }
  return loss;
}

Tensor softmax_cross_entropy_backward(const SoftmaxCeCache& cache, double dloss) {
  const std::size_t n = cache.probs.rows();
  Tensor dlogits = cache.probs;
  const double s = dloss / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    dlogits.at(i, static_cast<std::size_t>(cache.targets[i])) -= 1.0;
  }
  dlogits *= s;
  return dlogits;
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) throw std::invalid_argument("softmax_rows: 2-D expected");
  const std::size_t n = logits.rows(), v = logits.cols();
  Tensor probs = logits;
  for (std::size_t i = 0; i < n; ++i) {
    double* row = probs.data() + i * v;
    double m = row[0];
    for (std::size_t j = 1; j < v; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      row[j] = std::exp(row[j] - m);
      z += row[j];
    }
    for (std::size_t j = 0; j < v; ++j) row[j] /= z;
  }
  return probs;
}

Tensor dropout_mask(std::size_t dim, double rho, Rng& rng) {
  if (rho < 0.0 || rho >= 1.0) {
    throw std::invalid_argument(
        "dropout_mask: rho must lie in [0, 1); rho >= 1 would zero every sub-model");
  }
  Tensor mask = Tensor::full({dim}, 1.0);
  if (rho > 0.0) {
    for (std::size_t i = 0; i < dim; ++i) {
      if (rng.uniform() < rho) mask[i] = 0.0;
    }
  } else {
    // rho == 0 still consumes the stream so batch layouts stay aligned.
    for (std::size_t i = 0; i < dim; ++i) rng.uniform();
  }
  return mask;
}

Tensor scaled_dropout_mask(std::size_t n, std::size_t d, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("scaled_dropout_mask: p must lie in [0, 1)");
  }
  Tensor m{{n, d}};
  const double keep = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < p ? 0.0 : keep;
  return m;
}

}  // namespace rmgan
