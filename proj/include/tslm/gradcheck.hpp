#pragma once

#include <functional>

#include "tslm/tensor.hpp"

namespace tslm {

// Compares reverse-mode gradients of a scalar-valued function against
// central finite differences, in 64-bit precision. Returns the max over
// coordinates of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double fd_step = 1e-6);

// Same comparison for a parameter embedded in a model: loss_fn recomputes the
// scalar loss reading `param` wherever it lives; coordinates are perturbed in
// place for the finite-difference side and restored afterwards.
double grad_check_param(const std::function<Tensor()>& loss_fn, Tensor param,
                        double fd_step = 1e-6);

}  // namespace tslm
