#include <gtest/gtest.h>

#include <cmath>

#include "cehr/errors.hpp"
#include "cehr/optimizer.hpp"

using namespace cehr;

TEST(Adam, FirstStepMovesByLearningRateAgainstTheGradientSign) {
  Tensor p = Tensor::vector({1.0, -2.0, 0.5});
  Tensor g = Tensor::vector({0.3, -4.0, 1e-3});
  Adam adam;
  adam.step({&p}, {&g});
  // With bias correction, m_hat = g and v_hat = g^2 after one step.
  const double lr = 1e-3, eps = 1e-8;
  EXPECT_NEAR(p[0], 1.0 - lr * 0.3 / (0.3 + eps), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + lr * 4.0 / (4.0 + eps), 1e-15);
  EXPECT_NEAR(p[2], 0.5 - lr * 1e-3 / (1e-3 + eps), 1e-15);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, MatchesHandRolledRecurrence) {
  AdamConfig cfg{0.01, 0.8, 0.95, 1e-6};
  Adam adam(cfg);
  Tensor p = Tensor::scalar(0.7);
  double ref = 0.7, m = 0, v = 0;
  for (int t = 1; t <= 25; ++t) {
    const double grad = std::sin(t * 0.9) + 0.2 * ref;
    Tensor g = Tensor::scalar(grad);
    adam.step({&p}, {&g});
    m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad;
    const double mh = m / (1 - std::pow(cfg.beta1, t));
    const double vh = v / (1 - std::pow(cfg.beta2, t));
    ref -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    EXPECT_NEAR(p.item(), ref, 1e-14);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor g = Tensor::zeros({2, 2});
  Adam adam;
  adam.step({&p}, {&g});
  EXPECT_EQ(p, Tensor::matrix(2, 2, {1, 2, 3, 4}));
}

TEST(Adam, MinimisesAQuadratic) {
  Adam adam({0.05, 0.9, 0.999, 1e-8});
  Tensor p = Tensor::vector({3.0, -2.0});
  for (int i = 0; i < 2000; ++i) {
    Tensor g = Tensor::vector({2 * (p[0] - 1.0), 2 * (p[1] + 0.5)});
    adam.step({&p}, {&g});
  }
  EXPECT_NEAR(p[0], 1.0, 1e-3);
  EXPECT_NEAR(p[1], -0.5, 1e-3);
}

TEST(Adam, RejectsMismatchedInputs) {
  Tensor p = Tensor::vector({1, 2});
  Tensor g = Tensor::vector({1, 2, 3});
  Adam adam;
  EXPECT_THROW(adam.step({&p}, {&g}), ContractError);
  EXPECT_THROW(adam.step({&p}, {}), ContractError);
  Tensor ok = Tensor::vector({1, 1});
  adam.step({&p}, {&ok});
  Tensor q = Tensor::vector({1});
  Tensor gq = Tensor::vector({1});
  EXPECT_THROW(adam.step({&p, &q}, {&ok, &gq}), ContractError);
}
