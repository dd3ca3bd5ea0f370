#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cehr/errors.hpp"
#include "cehr/metrics.hpp"
#include "cehr/training.hpp"

using namespace cehr;

namespace {

// Two clusters that differ in the mean of a handful of features.
std::vector<BinnedSequence> toy_fold(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<BinnedSequence> fold;
  for (std::size_t i = 0; i < n; ++i) {
    BinnedSequence s;
    s.label = i % 2 == 0 ? 1 : 0;
    s.steps = Tensor::zeros({4, kNumFeatures});
    const double centre = s.label ? 1.5 : -1.5;
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t f = 0; f < 5; ++f) s.steps.at(t, f) = centre + noise(rng);
    }
    fold.push_back(std::move(s));
  }
  return fold;
}

double training_auroc(const ModelParams& m, LossKind loss, const std::vector<BinnedSequence>& fold) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const BinnedSequence& s : fold) {
    scores.push_back(predict(m, loss, Task::mortality, s));
    labels.push_back(s.label);
  }
  return auroc(scores, labels);
}

}  // namespace

TEST(Train, ZeroEpochsReturnsTheInitialisation) {
  const auto fold = toy_fold(10, 1);
  TrainConfig cfg;
  cfg.latent = 4;
  cfg.epochs = 0;
  const TrainResult r = train(fold, EncoderKind::rnn, LossKind::cl, Task::mortality, cfg, 5);
  const ModelParams init = init_model(EncoderKind::rnn, 4, 5, cfg.init_scale);
  const auto a = param_list(r.params);
  const auto b = param_list(init);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  EXPECT_TRUE(r.loss_trace.empty());
}

TEST(Train, SeparableToyFoldIsLearnedByBothLosses) {
  const auto fold = toy_fold(40, 2);
  TrainConfig cfg;
  cfg.latent = 8;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.adam.learning_rate = 1e-2;
  for (EncoderKind enc : {EncoderKind::rnn, EncoderKind::retain}) {
    for (LossKind loss : {LossKind::cel, LossKind::cl}) {
      const TrainResult r = train(fold, enc, loss, Task::mortality, cfg, 3);
      EXPECT_GE(training_auroc(r.params, loss, fold), 0.95)
          << encoder_name(enc) << " " << loss_name(loss);
      ASSERT_EQ(r.loss_trace.size(), 30u);
      EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
      for (double v : r.loss_trace) EXPECT_TRUE(std::isfinite(v));
      if (loss == LossKind::cl) {
        double mean_positive = 0.0;
        for (const BinnedSequence& s : fold) {
          if (s.label) mean_positive += predict(r.params, loss, Task::mortality, s) / 20.0;
        }
        EXPECT_GT(mean_positive, 0.9) << encoder_name(enc);
      }
    }
  }
}

TEST(Train, FixedSeedGivesIdenticalTraces) {
  const auto fold = toy_fold(24, 3);
  TrainConfig cfg;
  cfg.latent = 4;
  cfg.epochs = 3;
  for (LossKind loss : {LossKind::cel, LossKind::cl}) {
    const TrainResult a = train(fold, EncoderKind::retain, loss, Task::mortality, cfg, 11);
    const TrainResult b = train(fold, EncoderKind::retain, loss, Task::mortality, cfg, 11);
    EXPECT_EQ(a.loss_trace, b.loss_trace);
    EXPECT_EQ(a.params.retain->embed, b.params.retain->embed);
  }
}

TEST(Train, DivergenceNamesEpochAndBatch) {
  auto fold = toy_fold(12, 4);
  fold[5].steps.at(2, 3) = std::nan("");
  TrainConfig cfg;
  cfg.latent = 3;
  cfg.epochs = 2;
  try {
    train(fold, EncoderKind::rnn, LossKind::cel, Task::mortality, cfg, 1);
    FAIL() << "expected a training error";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos);
    EXPECT_NE(msg.find("batch"), std::string::npos);
  }
}

TEST(Train, ContrastiveTrainingNeedsEnoughPeers) {
  auto fold = toy_fold(6, 5);
  for (auto& s : fold) s.label = 0;
  fold[0].label = 1;
  TrainConfig cfg;
  cfg.latent = 3;
  cfg.epochs = 1;
  EXPECT_THROW(train(fold, EncoderKind::rnn, LossKind::cl, Task::mortality, cfg, 1), ContractError);
}

TEST(Train, LossTraceCsv) {
  std::ostringstream out;
  write_loss_trace(out, {0.5, 0.25});
  EXPECT_EQ(out.str(), "epoch,mean_loss\n1,0.5\n2,0.25\n");
}

TEST(Train, LossNames) {
  EXPECT_EQ(parse_loss("cl"), LossKind::cl);
  EXPECT_EQ(parse_loss(loss_name(LossKind::cel)), LossKind::cel);
  EXPECT_THROW(parse_loss("mse"), ValidationError);
  EXPECT_EQ(parse_encoder("retain"), EncoderKind::retain);
  EXPECT_THROW(parse_encoder("lstm"), ValidationError);
}
