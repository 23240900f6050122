#include "rmgan/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rmgan {

void AdamW::step(const std::vector<Tensor*>& params,
                 const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("AdamW::step: params/grads length mismatch");
  }
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("AdamW::step: parameter list changed size");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    if (!p.same_shape(g) || !p.same_shape(m)) {
      throw std::invalid_argument("AdamW::step: shape mismatch at parameter " +
                                  std::to_string(k));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                         cfg_.weight_decay * p[i]);
    }
  }
}

}  // namespace rmgan
