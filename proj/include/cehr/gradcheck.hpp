#pragma once

#include <functional>
#include <vector>

#include "cehr/tensor.hpp"

namespace cehr {

/// Compares analytic gradients against central differences
/// (f(θ+eps) - f(θ-eps)) / (2 eps), one coordinate at a time, and returns the
/// worst relative error |a - n| / max(|a|, |n|, 1e-8).
///
/// `params` are perturbed in place and restored before returning. `f` must
/// read them through whatever object owns the tensors. Throws ContractError
/// when eps is outside [1e-7, 1e-3], when shapes of params and analytic
/// disagree, or when two evaluations at the base point differ.
double finite_diff_check(const std::function<double()>& f, const std::vector<Tensor*>& params,
                         const std::vector<const Tensor*>& analytic, double eps = 1e-5);

}  // namespace cehr
