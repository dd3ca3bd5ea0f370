#include "cehr/optimizer.hpp"

#include <cmath>

#include "cehr/errors.hpp"

namespace cehr {

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) {
    throw ContractError("Adam::step: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p]->shape() != grads[p]->shape()) {
      throw ContractError("Adam::step: gradient shape " + shape_string(grads[p]->shape()) +
                          " does not match parameter " + shape_string(params[p]->shape()));
    }
  }
  if (first_.empty()) {
    for (const Tensor* param : params) {
      first_.push_back(Tensor::zeros(param->shape()));
      second_.push_back(Tensor::zeros(param->shape()));
    }
  } else if (first_.size() != params.size()) {
    throw ContractError("Adam::step: parameter count changed between steps");
  }

  ++step_;
  const double t = static_cast<double>(step_);
  const double correct1 = 1.0 - std::pow(config_.beta1, t);
  const double correct2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p];
    const Tensor& g = *grads[p];
    Tensor& m = first_[p];
    Tensor& v = second_[p];
    if (m.shape() != theta.shape()) {
      throw ContractError("Adam::step: parameter " + std::to_string(p) + " changed shape");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      theta[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace cehr
