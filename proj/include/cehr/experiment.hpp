#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cehr/cohort.hpp"
#include "cehr/interpret.hpp"
#include "cehr/metrics.hpp"
#include "cehr/preprocess.hpp"
#include "cehr/synthgen.hpp"
#include "cehr/training.hpp"

namespace cehr {

enum class Regime { full, restricted };

std::string_view regime_name(Regime regime);
Regime parse_regime(std::string_view name);

enum class CheckpointPolicy { none, first, all };

struct ExperimentConfig {
  std::string cohort_path;
  bool generate = false;  // build the cohort from `generator` instead of reading a file
  GeneratorConfig generator;
  std::string schema_path;

  std::vector<Task> tasks{Task::mortality, Task::intubation, Task::icu_transfer};
  std::vector<EncoderKind> encoders{EncoderKind::retain, EncoderKind::rnn};
  std::vector<LossKind> losses{LossKind::cel, LossKind::cl};
  std::vector<int> windows{24, 48};
  std::vector<Regime> regimes{Regime::full, Regime::restricted};
  /// Target positive rate per task (mortality, intubation, icu_transfer);
  /// nullopt keeps the cohort's own rate.
  std::array<std::optional<double>, 3> full_rates{0.23, 0.10, 0.17};
  std::array<std::optional<double>, 3> restricted_rates{0.07, 0.05, 0.07};

  double clip_low = 0.5;
  double clip_high = 99.5;
  TrainConfig train;
  std::size_t folds = 10;
  std::uint64_t seed = 42;

  std::string out_dir = "out";
  bool export_embeddings = true;
  bool export_heatmaps = true;
  bool export_curves = true;
  bool export_loss_traces = true;
  CheckpointPolicy checkpoints = CheckpointPolicy::first;
  std::size_t jobs = 1;
};

/// Preprocessed train/test sequences of one cross-validation fold.
struct FoldData {
  std::vector<BinnedSequence> train;
  std::vector<BinnedSequence> test;
  std::vector<std::string> test_ids;
  Preprocessor preprocessor;
  EndpointStats endpoints;
};

/// Applies the regime's down-sampling for `task` (seeded from the config).
Cohort regime_cohort(const Cohort& cohort, Task task, Regime regime, const ExperimentConfig& config);

/// Stratified split of a regime cohort, seeded from the config.
FoldAssignment split_for(const Cohort& cohort, Task task, Regime regime, const ExperimentConfig& config);

/// Fits clipping, z-scoring and endpoint statistics on the training part of
/// `fold`, then bins every patient. Positives end at their event time,
/// negatives at a Gaussian endpoint drawn from the training positives.
FoldData prepare_fold(const Cohort& cohort, Task task, int window, const FoldAssignment& folds,
                      std::size_t fold, const ExperimentConfig& config);

/// Seed used for model init and training of `fold`: base seed + fold index.
std::uint64_t fold_seed(const ExperimentConfig& config, std::size_t fold);

struct CellKey {
  Task task = Task::mortality;
  EncoderKind encoder = EncoderKind::retain;
  LossKind loss = LossKind::cl;
  int window = 24;
  Regime regime = Regime::full;

  /// "mortality_retain_cl_24h_full"
  std::string slug() const;
};

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<double> scores;
  std::optional<double> auroc;
  std::optional<double> auprc;
  std::optional<double> silhouette;
  std::vector<std::string> undefined;  // "metric: reason"
  Tensor embeddings;                   // held-out fused C_p, one row per patient
  std::optional<Heatmap> heatmap;      // RETAIN only
  std::vector<double> loss_trace;
  std::optional<ModelParams> model;    // kept per checkpoint policy
};

struct CellResult {
  CellKey key;
  std::size_t patients = 0;
  double positive_rate = 0.0;
  std::vector<FoldResult> folds;

  Summary auroc() const;
  Summary auprc() const;
  Summary silhouette() const;
};

struct MetricsReport {
  std::vector<CellResult> cells;

  const CellResult* find(const CellKey& key) const;
};

/// Progress callback, called after each trained fold.
using ProgressFn = std::function<void(const CellKey&, std::size_t fold)>;

/// Runs every (task, encoder, loss, window, regime) cell with k-fold cross
/// validation. Folds run on up to `config.jobs` threads; results are
/// assembled in fold order so the report does not depend on scheduling.
/// A failing fold aborts with its id.
MetricsReport run_experiment(const ExperimentConfig& config, const Cohort& cohort,
                             const ProgressFn& progress = {});

/// CSV "patient_id,label,c0..c{l-1}".
void export_embeddings(const std::string& path, const FoldResult& fold);
struct EmbeddingTable {
  std::vector<std::string> ids;
  std::vector<int> labels;
  Tensor values;
};
EmbeddingTable read_embeddings(const std::string& path);

/// Writes report.json, curves.csv and the per-fold embeddings, heatmaps,
/// rankings, loss traces and checkpoints enabled in the config.
void write_outputs(const ExperimentConfig& config, const MetricsReport& report,
                   const FeatureSchema& schema);

/// The config block omits output.dir and run.jobs.
std::string report_json(const ExperimentConfig& config, const MetricsReport& report);

}  // namespace cehr
