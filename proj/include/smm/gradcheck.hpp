#pragma once

#include <functional>
#include <span>

#include "smm/tensor.hpp"

namespace smm {

// Max over coordinates of |analytic - central difference| /
// (|analytic| + |numeric| + 1e-12). `f` must be deterministic.
Scalar finite_diff_gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                             Scalar h = Scalar(1e-5));

// Same measure, taken w.r.t. every coordinate of `params` (perturbed in place
// and restored). `f` rebuilds the graph from the current parameter values.
Scalar finite_diff_gradcheck_params(const std::function<Tensor()>& f, std::span<Tensor> params,
                                    Scalar h = Scalar(1e-5));

}  // namespace smm
