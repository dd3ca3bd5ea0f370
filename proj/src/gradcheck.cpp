#include "cehr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cehr/errors.hpp"

namespace cehr {

double finite_diff_check(const std::function<double()>& f, const std::vector<Tensor*>& params,
                         const std::vector<const Tensor*>& analytic, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("finite_diff_check: eps must lie in [1e-7, 1e-3]");
  }
  if (params.size() != analytic.size()) {
    throw ContractError("finite_diff_check: parameter and gradient counts differ");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p]->shape() != analytic[p]->shape()) {
      throw ContractError("finite_diff_check: gradient " + std::to_string(p) + " has shape " +
                          shape_string(analytic[p]->shape()) + ", parameter has " +
                          shape_string(params[p]->shape()));
    }
  }
  const double base = f();
  if (f() != base) throw ContractError("finite_diff_check: objective is not deterministic");

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + eps;
      const double up = f();
      theta[i] = saved - eps;
      const double down = f();
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = (*analytic[p])[i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace cehr
