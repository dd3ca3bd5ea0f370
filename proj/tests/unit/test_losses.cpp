#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "cehr/errors.hpp"
#include "cehr/gradcheck.hpp"
#include "cehr/losses.hpp"
#include "cehr/training.hpp"

using namespace cehr;

namespace {

double log_sig(double x) { return -std::log1p(std::exp(-x)); }

double dot2(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Sampler, DefaultsAreTwoAndOne) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.same_peers, 2u);
  EXPECT_EQ(cfg.opposite_peers, 1u);
  const ContrastiveWeights w;
  EXPECT_EQ(w.label, 0.8);
  EXPECT_EQ(w.peer, 0.2);
}

TEST(Sampler, MinimalFoldForcesTheBatch) {
  const std::vector<int> labels{1, 1, 0, 1};
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const ContrastiveBatch b = sample_contrastive_batch(labels, 0, 2, 1, rng);
    EXPECT_EQ(b.label, 1);
    std::vector<std::size_t> same = b.same;
    std::sort(same.begin(), same.end());
    EXPECT_EQ(same, (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(b.opposite, (std::vector<std::size_t>{2}));
  }
}

TEST(Sampler, SameLabelPeersAreUniform) {
  // Anchor 0 plus ten same-label candidates and a few opposite ones.
  std::vector<int> labels(11, 0);
  labels.insert(labels.end(), {1, 1, 1});
  const ContrastiveSampler sampler(labels);
  std::mt19937_64 rng(8);
  std::map<std::size_t, int> hits;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const ContrastiveBatch b = sampler.sample(0, 2, 1, rng);
    ASSERT_NE(b.same[0], b.same[1]);
    for (std::size_t j : b.same) {
      ASSERT_NE(j, 0u);
      ASSERT_EQ(labels[j], 0);
      ++hits[j];
    }
    ASSERT_EQ(labels[b.opposite[0]], 1);
  }
  ASSERT_EQ(hits.size(), 10u);
  for (auto [id, count] : hits) EXPECT_NEAR(static_cast<double>(count) / draws, 0.2, 0.02) << id;
}

TEST(Sampler, SmallGroupsAreNamed) {
  const std::vector<int> labels{1, 1, 0, 0, 0};
  std::mt19937_64 rng(1);
  try {
    sample_contrastive_batch(labels, 0, 2, 1, rng);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("positive"), std::string::npos);
  }
  const std::vector<int> no_negatives{1, 1, 1, 1};
  EXPECT_THROW(sample_contrastive_batch(no_negatives, 0, 2, 1, rng), ContractError);
}

TEST(ClLoss, AllZeroEmbeddingsGiveTwoPointTwoLnTwo) {
  const Tensor z = Tensor::zeros({4});
  const std::vector<Tensor> same{z, z}, opposite{z};
  EXPECT_NEAR(cl_loss(z, z, z, same, opposite), 2.2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(cl_loss(z, z, z, same, opposite), 1.524924, 1e-6);
}

TEST(ClLoss, HandSetTermsMatchDirectEvaluation) {
  const Tensor u = Tensor::vector({0.4, -0.3});
  const Tensor ce = Tensor::vector({0.9, 0.2});
  const Tensor ce_star = Tensor::vector({-0.5, 0.7});
  const Tensor p1 = Tensor::vector({0.1, 0.8}), p2 = Tensor::vector({-0.6, -0.2});
  const Tensor n1 = Tensor::vector({1.2, -0.9});
  const double a = 0.8, b = 0.2;
  const double expected = -a * (log_sig(dot2(ce, u)) + log_sig(-dot2(ce_star, u))) -
                          b * (log_sig(dot2(p1, u)) + log_sig(dot2(p2, u)) + log_sig(-dot2(n1, u)));
  const std::vector<Tensor> same{p1, p2}, opposite{n1};
  EXPECT_NEAR(cl_loss(u, ce, ce_star, same, opposite), expected, 1e-14);
}

TEST(ClLoss, CustomWeightsScaleTheTerms) {
  const Tensor z = Tensor::zeros({2});
  const std::vector<Tensor> same{z, z}, opposite{z};
  EXPECT_NEAR(cl_loss(z, z, z, same, opposite, {1.0, 0.0}), 2 * std::log(2.0), 1e-14);
  EXPECT_NEAR(cl_loss(z, z, z, same, opposite, {0.0, 1.0}), 3 * std::log(2.0), 1e-14);
}

TEST(ClLoss, GradientsOnAThreePatientBatch) {
  std::mt19937_64 rng(21);
  std::vector<Tensor> t;
  for (int i = 0; i < 5; ++i) t.push_back(Tensor::uniform({3}, -1, 1, rng));
  auto f = [&] {
    const std::vector<Tensor> same{t[3]}, opposite{t[4]};
    return cl_loss(t[0], t[1], t[2], same, opposite);
  };
  Tape tape;
  std::vector<Var> v;
  for (const Tensor& x : t) v.push_back(tape.leaf(x));
  const std::vector<Var> same{v[3]}, opposite{v[4]};
  tape.backward(cl_loss(v[0], v[1], v[2], same, opposite));
  std::vector<Tensor> grads;
  for (const Var& x : v) grads.push_back(tape.grad(x));
  std::vector<Tensor*> params;
  std::vector<const Tensor*> analytic;
  for (std::size_t i = 0; i < t.size(); ++i) {
    params.push_back(&t[i]);
    analytic.push_back(&grads[i]);
  }
  EXPECT_LT(finite_diff_check(f, params, analytic), 1e-4);
}

TEST(CelLoss, ZeroHeadGivesLnTwoForEitherLabel) {
  const CelHead head{Tensor::zeros({2, 3}), Tensor::zeros({2})};
  const Tensor c = Tensor::vector({0.3, -1.0, 2.0});
  EXPECT_NEAR(cel_loss(c, 1, head), std::log(2.0), 1e-15);
  EXPECT_NEAR(cel_loss(c, 0, head), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(predict_cel(c, head), 0.5);
}

TEST(CelLoss, ConfidentCorrectPredictionHasVanishingLoss) {
  const CelHead head{Tensor::matrix(2, 1, {50.0, 0.0}), Tensor::zeros({2})};
  const Tensor c = Tensor::vector({1.0});
  EXPECT_LT(cel_loss(c, 1, head), 1e-20);
  EXPECT_NEAR(cel_loss(c, 0, head), 50.0, 1e-9);
  EXPECT_GT(predict_cel(c, head), 1.0 - 1e-12);
}

TEST(CelLoss, HandSetInstance) {
  const CelHead head{Tensor::matrix(2, 2, {0.7, -0.4, 9.0, 9.0}), Tensor::vector({0.1, -3.0})};
  const Tensor c = Tensor::vector({0.5, 0.25});
  const double logit = 0.7 * 0.5 - 0.4 * 0.25 + 0.1;
  const double p = 1.0 / (1.0 + std::exp(-logit));
  EXPECT_NEAR(cel_loss(c, 1, head), -std::log(p), 1e-15);
  EXPECT_NEAR(cel_loss(c, 0, head), -std::log(1 - p), 1e-15);
  EXPECT_NEAR(predict_cel(c, head), p, 1e-15);
}

TEST(PredictCl, OrthogonalIsOneHalfAndAlignedIsSigmoidOfNorm) {
  // C_e+ = tanh(W_e[:,0] + b_e) - R_o[task]; set W_e = 0 and b_e = 0 so the
  // event embedding is -R_o[task].
  EventParams p{Tensor::zeros({3, 2}), Tensor::zeros({3}), Tensor::zeros({3, 3})};
  p.relation.at(0, 0) = -1.0;
  EXPECT_DOUBLE_EQ(predict_cl(Tensor::vector({0, 1, 0}), Task::mortality, p), 0.5);
  for (std::size_t j = 0; j < 3; ++j) p.relation.at(1, j) = -1.0;
  EXPECT_NEAR(predict_cl(Tensor::vector({1, 1, 1}), Task::intubation, p), 0.9525741268224334, 1e-15);
}

TEST(PredictCl, MonotoneInTheInnerProduct) {
  EventParams p{Tensor::zeros({2, 2}), Tensor::zeros({2}), Tensor::zeros({3, 2})};
  p.relation.at(2, 0) = -0.8;
  p.relation.at(2, 1) = 0.3;
  double prev = -1.0;
  for (double t = -5.0; t <= 5.0; t += 0.25) {
    const double cur = predict_cl(Tensor::vector({t, -0.4 * t}), Task::icu_transfer, p);
    EXPECT_GE(cur, prev);
    prev = cur;
  }
}

TEST(Predict, ShapeMismatchIsRejected) {
  const EventParams p{Tensor::zeros({2, 2}), Tensor::zeros({2}), Tensor::zeros({3, 2})};
  EXPECT_THROW(predict_cl(Tensor::zeros({3}), Task::mortality, p), ShapeError);
  const CelHead head{Tensor::zeros({2, 2}), Tensor::zeros({2})};
  EXPECT_THROW(predict_cel(Tensor::zeros({3}), head), ShapeError);
}
