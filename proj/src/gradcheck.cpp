#include "rmgan/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "rmgan/error.hpp"

namespace rmgan {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_difference_gradient: step must be positive");
  Tensor grad{x.shape()};
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double fp = f(probe);
    probe[i] = saved - step;
    const double fm = f(probe);
    probe[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_difference_gradient: non-finite function value");
    }
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

double max_rel_err(const Tensor& reference, const Tensor& candidate, double floor) {
  if (!reference.same_shape(candidate)) {
    throw std::invalid_argument("max_rel_err: shape mismatch");
  }
  // Largest deviation, measured against the largest reference magnitude.
  // The floor keeps the ratio meaningful for all-zero gradients.
  const double denom = std::max(floor, reference.max_abs());
  double worst = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double err = std::fabs(reference[i] - candidate[i]) / denom;
    if (err > worst) worst = err;
  }
  return worst;
}

double finite_difference_check(const std::function<double(const Tensor&)>& f,
                               const Tensor& x, const Tensor& analytic_grad,
                               double step, double floor) {
  const Tensor fd = finite_difference_gradient(f, x, step);
  return max_rel_err(fd, analytic_grad, floor);
}

}  // namespace rmgan
