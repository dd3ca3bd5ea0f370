#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cehr/cohort.hpp"
#include "cehr/models.hpp"
#include "cehr/training.hpp"

namespace cehr {

/// Per-cell contribution scores, 63 features x n time bins.
struct ImportanceMatrix {
  Tensor scores;
};

/// w_{i,k} = alpha_i * [(beta_i (.) c_e)^T W_p]_k * X_{i,k}, where c_e is the
/// task's positive event embedding. Summed over every cell this equals
/// c_e . C_p computed from the unfused RETAIN context.
ImportanceMatrix importance_cl(std::span<const double> alpha, const Tensor& beta,
                               const Tensor& embed, const EventParams& event, Task task,
                               const Tensor& steps);

/// Same contraction with the positive-class row of the CEL head; the sum over
/// all cells equals the positive logit minus its bias.
ImportanceMatrix importance_cel(std::span<const double> alpha, const Tensor& beta,
                                const Tensor& embed, const Tensor& head_weight,
                                const Tensor& steps);

/// Runs the RETAIN encoder on `seq` and dispatches on the loss. Throws
/// ContractError for RNN models, which have no attention weights.
ImportanceMatrix patient_importance(const ModelParams& model, LossKind loss, Task task,
                                    const BinnedSequence& seq);

struct FeatureScore {
  std::size_t feature = 0;
  double score = 0.0;
};

struct Heatmap {
  Tensor values;                      // 63 x n, in [0, 1]
  std::vector<FeatureScore> ranking;  // best first
};

/// Mean |w| over patients, scaled so the largest cell is 1. A feature's score
/// is its largest normalized cell; ranking is stable, ties by feature index.
/// Throws ContractError on an empty set or mismatched shapes.
Heatmap aggregate_heatmap(std::span<const ImportanceMatrix> matrices);

/// Column labels for a window, oldest bin first: "-24h:-18h", ...
std::vector<std::string> bin_labels(std::size_t bins);

/// "feature,<bin labels...>" then one row per feature.
void write_heatmap_csv(std::ostream& out, const Heatmap& heatmap, const FeatureSchema& schema);
/// "rank,feature_id,name,score".
void write_ranking_csv(std::ostream& out, const Heatmap& heatmap, const FeatureSchema& schema);

}  // namespace cehr
