#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cehr/autodiff.hpp"
#include "cehr/errors.hpp"
#include "cehr/gradcheck.hpp"

using namespace cehr;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  return Tensor::uniform(std::move(shape), -scale, scale, rng);
}

// Builds a scalar from `build`, checks tape gradients against central
// differences for every input, and returns the worst relative error.
template <class Build>
double check_op(std::vector<Tensor> inputs, Build build) {
  auto evaluate = [&](bool record_grads, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    Var out = build(vars);
    if (record_grads) {
      tape.backward(out);
      for (const Var& v : vars) grads->push_back(tape.grad(v));
    }
    return out.value().item();
  };
  std::vector<Tensor> grads;
  evaluate(true, &grads);
  std::vector<Tensor*> params;
  std::vector<const Tensor*> analytic;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    params.push_back(&inputs[i]);
    analytic.push_back(&grads[i]);
  }
  return finite_diff_check([&] { return evaluate(false, nullptr); }, params, analytic, 1e-5);
}

// Reduces an arbitrary tensor to a scalar with fixed, non-uniform weights so
// every output coordinate receives a distinct upstream gradient.
Var weighted_sum(Var v) {
  Tape& tape = *v.tape;
  Tensor w(v.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
  return sum(mul(v, tape.constant(w)));
}

}  // namespace

TEST(Autodiff, ElementwiseGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = random_tensor({3, 2}, rng, 2.0);
    Tensor b = random_tensor({3, 2}, rng, 2.0);
    EXPECT_LT(check_op({a, b}, [](auto& v) { return weighted_sum(v[0] + v[1]); }), 1e-6);
    EXPECT_LT(check_op({a, b}, [](auto& v) { return weighted_sum(v[0] - v[1]); }), 1e-6);
    EXPECT_LT(check_op({a, b}, [](auto& v) { return weighted_sum(v[0] * v[1]); }), 1e-6);
    EXPECT_LT(check_op({a}, [](auto& v) { return weighted_sum(scale(v[0], -1.7)); }), 1e-6);
    EXPECT_LT(check_op({a}, [](auto& v) { return weighted_sum(tanh(v[0])); }), 1e-6);
    EXPECT_LT(check_op({a}, [](auto& v) { return weighted_sum(sigmoid(v[0])); }), 1e-6);
    EXPECT_LT(check_op({a}, [](auto& v) { return weighted_sum(log_sigmoid(v[0])); }), 1e-6);
  }
}

TEST(Autodiff, LinearAlgebraGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor A = random_tensor({3, 4}, rng);
    Tensor B = random_tensor({4, 2}, rng);
    Tensor x = random_tensor({4}, rng);
    Tensor y = random_tensor({4}, rng);
    EXPECT_LT(check_op({A, B}, [](auto& v) { return weighted_sum(matmul(v[0], v[1])); }), 1e-6);
    EXPECT_LT(check_op({A, x}, [](auto& v) { return weighted_sum(matvec(v[0], v[1])); }), 1e-6);
    EXPECT_LT(check_op({x, y}, [](auto& v) { return dot(v[0], v[1]); }), 1e-6);
    EXPECT_LT(check_op({x}, [](auto& v) { return weighted_sum(softmax(v[0])); }), 1e-6);
    EXPECT_LT(check_op({x, y},
                       [](auto& v) {
                         std::vector<Var> parts{v[0], v[1]};
                         return weighted_sum(concat(parts));
                       }),
              1e-6);
    EXPECT_LT(check_op({A}, [](auto& v) { return weighted_sum(row(v[0], 2)); }), 1e-6);
    EXPECT_LT(check_op({x}, [](auto& v) { return element(v[0], 3); }), 1e-6);
    EXPECT_LT(check_op({x, y},
                       [](auto& v) { return weighted_sum(scale_by(element(v[0], 1), v[1])); }),
              1e-6);
  }
}

TEST(Autodiff, ReusedNodesAccumulateGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1.5, -2.0}));
  Var y = sum(x * x + x);
  tape.backward(y);
  const Tensor g = tape.grad(x);
  EXPECT_DOUBLE_EQ(g[0], 2 * 1.5 + 1);
  EXPECT_DOUBLE_EQ(g[1], 2 * -2.0 + 1);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor::vector({3.0, 4.0}));
  Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  tape.backward(dot(c, x));
  EXPECT_FALSE(tape.requires_grad(c));
  EXPECT_EQ(tape.grad(c), Tensor::zeros({2}));
  EXPECT_EQ(tape.grad(x), Tensor::vector({3.0, 4.0}));
}

TEST(Autodiff, UnreachedLeafHasZeroGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  Var unused = tape.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  tape.backward(sum(x));
  EXPECT_EQ(tape.grad(unused), Tensor::zeros({2, 2}));
}

TEST(Autodiff, BackwardIsLinearInTheLoss) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor xv = random_tensor({5}, rng);
    const Tensor wv = random_tensor({3, 5}, rng);
    const double c1 = 0.7, c2 = -1.3;
    auto grad_of = [&](double k1, double k2) {
      Tape tape;
      Var x = tape.leaf(xv);
      Var w = tape.constant(wv);
      Var f = sum(tanh(matvec(w, x)));
      Var g = dot(x, x);
      tape.backward(scale(f, k1) + scale(g, k2));
      return tape.grad(x);
    };
    const Tensor gf = grad_of(1, 0), gg = grad_of(0, 1), both = grad_of(c1, c2);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(both[i], c1 * gf[i] + c2 * gg[i], 1e-12);
  }
}

TEST(Autodiff, RepeatedBackwardIsIdempotent) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({0.3, -0.2}));
  Var loss = sum(tanh(x * x));
  tape.backward(loss);
  const Tensor first = tape.grad(x);
  tape.backward(loss);
  EXPECT_EQ(tape.grad(x), first);
}

TEST(Autodiff, NonScalarLossIsRejected) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Autodiff, ShapeMismatchesAreRejected) {
  Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2}));
  Var b = tape.leaf(Tensor::vector({1, 2, 3}));
  Var m = tape.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(dot(a, b), ShapeError);
  EXPECT_THROW(matvec(m, b), ShapeError);
  EXPECT_THROW(matmul(m, tape.leaf(Tensor::matrix(3, 1, {1, 2, 3}))), ShapeError);
  EXPECT_THROW(element(a, 2), ShapeError);
}

TEST(Autodiff, SoftmaxSumsToOneAndSurvivesLargeInputs) {
  Tape tape;
  Var s = softmax(tape.leaf(Tensor::vector({1000.0, 999.0, -1000.0})));
  double total = 0;
  for (double v : s.value().values()) {
    EXPECT_TRUE(std::isfinite(v));
    total += v;
  }
  EXPECT_NEAR(total, 1.0, 1e-15);
}

TEST(Autodiff, ScalarSigmoidHelpers) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_LT(1.0 - sigmoid(50.0), 1e-20);
  EXPECT_GT(sigmoid(-50.0), 0.0);
  EXPECT_NEAR(log_sigmoid(0.0), -std::log(2.0), 1e-15);
  EXPECT_TRUE(std::isfinite(log_sigmoid(-800.0)));
  EXPECT_NEAR(log_sigmoid(-800.0), -800.0, 1e-9);
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-9);
}

TEST(GradCheck, AcceptsExactGradientAndFlagsWrongOne) {
  Tensor x = Tensor::vector({0.4, -1.1, 2.0});
  auto f = [&] {
    double s = 0;
    for (double v : x.values()) s += v * v * v;
    return s;
  };
  Tensor good({3}), bad({3});
  for (std::size_t i = 0; i < 3; ++i) {
    good[i] = 3 * x[i] * x[i];
    bad[i] = good[i] * 1.01;
  }
  EXPECT_LT(finite_diff_check(f, {&x}, {&good}), 1e-8);
  EXPECT_GT(finite_diff_check(f, {&x}, {&bad}), 5e-3);
  EXPECT_EQ(x, Tensor::vector({0.4, -1.1, 2.0}));
}

TEST(GradCheck, RejectsBadArguments) {
  Tensor x = Tensor::vector({1.0});
  Tensor g = Tensor::vector({2.0});
  Tensor wrong = Tensor::vector({1.0, 2.0});
  auto f = [&] { return x[0] * x[0]; };
  EXPECT_THROW(finite_diff_check(f, {&x}, {&g}, 1e-9), ContractError);
  EXPECT_THROW(finite_diff_check(f, {&x}, {&g}, 1e-2), ContractError);
  EXPECT_THROW(finite_diff_check(f, {&x}, {&wrong}), ContractError);
  int calls = 0;
  auto drifting = [&] { return x[0] + 1e-3 * ++calls; };
  EXPECT_THROW(finite_diff_check(drifting, {&x}, {&g}), ContractError);
}
