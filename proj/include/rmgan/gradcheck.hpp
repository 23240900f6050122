#pragma once

#include <functional>

#include "rmgan/tensor.hpp"

namespace rmgan {

/// Central-difference gradient of a scalar map, elementwise in x.
/// Throws NumericError if f produces a non-finite value.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double step);

/// Maximum elementwise deviation of `candidate` from `reference`, relative
/// to the largest reference magnitude, with an absolute floor guarding the
/// denominator.
double max_rel_err(const Tensor& reference, const Tensor& candidate,
                   double floor = 1e-6);

/// Compares an analytic gradient to central finite differences and returns
/// the maximum relative error. This is the oracle the backward passes are
/// checked against; it never calls any backward code itself.
double finite_difference_check(const std::function<double(const Tensor&)>& f,
                               const Tensor& x, const Tensor& analytic_grad,
                               double step, double floor = 1e-6);

}  // namespace rmgan
