#include <gtest/gtest.h>

#include <sstream>

#include "cehr/config.hpp"
#include "cehr/errors.hpp"

using namespace cehr;

namespace {

ExperimentConfig from_text(const std::string& text) {
  std::istringstream in(text);
  ExperimentConfig config;
  apply_entries(config, parse_key_values(in));
  return config;
}

std::string error_of(const std::string& text) {
  try {
    from_text(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig defaults;
  std::ostringstream out;
  write_config(out, defaults);
  const ExperimentConfig back = from_text(out.str());
  EXPECT_EQ(config_entries(back), config_entries(defaults));
}

TEST(Config, EditedValuesRoundTrip) {
  const ExperimentConfig c = from_text(
      "# comment line\n"
      "experiment.tasks = mortality, icu_transfer\n"
      "experiment.encoders = rnn\n"
      "experiment.windows = 48\n"
      "experiment.regimes = restricted\n"
      "regime.restricted.rates = 0.06, native, 0.1\n"
      "generator.signal_features = 4:-2.5, 9:0.125\n"
      "train.learning_rate = 0.0003\n"
      "output.checkpoints = all\n"
      "model.latent = 12   # trailing comment\n");
  EXPECT_EQ(c.tasks, (std::vector<Task>{Task::mortality, Task::icu_transfer}));
  EXPECT_EQ(c.encoders, (std::vector<EncoderKind>{EncoderKind::rnn}));
  EXPECT_EQ(c.windows, (std::vector<int>{48}));
  EXPECT_EQ(c.regimes, (std::vector<Regime>{Regime::restricted}));
  EXPECT_EQ(c.restricted_rates[0], 0.06);
  EXPECT_FALSE(c.restricted_rates[1].has_value());
  ASSERT_EQ(c.generator.signal_features.size(), 2u);
  EXPECT_EQ(c.generator.signal_features[0].feature, 4u);
  EXPECT_EQ(c.generator.signal_features[0].effect, -2.5);
  EXPECT_EQ(c.train.adam.learning_rate, 0.0003);
  EXPECT_EQ(c.checkpoints, CheckpointPolicy::all);
  EXPECT_EQ(c.train.latent, 12u);

  std::ostringstream out;
  write_config(out, c);
  EXPECT_EQ(config_entries(from_text(out.str())), config_entries(c));
}

TEST(Config, DoublesSurviveExactly) {
  ExperimentConfig c;
  c.train.adam.epsilon = 0.1 + 0.2;
  c.generator.noise_std = 1.0 / 3.0;
  std::ostringstream out;
  write_config(out, c);
  const ExperimentConfig back = from_text(out.str());
  EXPECT_EQ(back.train.adam.epsilon, c.train.adam.epsilon);
  EXPECT_EQ(back.generator.noise_std, c.generator.noise_std);
}

TEST(Config, LineErrorsNameTheLine) {
  EXPECT_NE(error_of("model.latent = 4\nnot a pair\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("model.latnet = 4\n").find("model.latnet"), std::string::npos);
  EXPECT_NE(error_of("model.latent = 4\nmodel.latent = 5\n").find("duplicate"), std::string::npos);
}

TEST(Config, BadValuesNameTheKey) {
  EXPECT_NE(error_of("train.epochs = many\n").find("train.epochs"), std::string::npos);
  EXPECT_NE(error_of("experiment.windows = 20\n").find("experiment.windows"), std::string::npos);
  EXPECT_NE(error_of("experiment.tasks = sepsis\n").find("experiment.tasks"), std::string::npos);
  EXPECT_NE(error_of("output.embeddings = maybe\n").find("output.embeddings"), std::string::npos);
  EXPECT_NE(error_of("output.checkpoints = some\n").find("output.checkpoints"), std::string::npos);
}

TEST(Config, SemanticChecks) {
  EXPECT_THROW(from_text("experiment.folds = 1\n"), ParseError);
  EXPECT_THROW(from_text("run.jobs = 0\n"), ParseError);
  EXPECT_THROW(from_text("preprocess.clip_low = 60\npreprocess.clip_high = 40\n"), ParseError);
  EXPECT_THROW(from_text("regime.full.rates = 0.2, 1.5, 0.1\n"), ParseError);
  EXPECT_THROW(from_text("train.learning_rate = 0\n"), ParseError);
}

TEST(Config, MissingFile) {
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ParseError);
}
