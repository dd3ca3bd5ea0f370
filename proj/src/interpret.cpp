#include "cehr/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "cehr/errors.hpp"

namespace cehr {

namespace {

// Shared contraction: direction d (length l) against beta_i and W_p.
ImportanceMatrix contract(std::span<const double> alpha, const Tensor& beta, const Tensor& embed,
                          const std::vector<double>& direction, const Tensor& steps) {
  const std::size_t n = steps.rows();
  const std::size_t l = embed.rows();
  if (steps.rank() != 2 || steps.cols() != embed.cols()) {
    throw ShapeError("importance: steps " + shape_string(steps.shape()) + " vs W_p " +
                     shape_string(embed.shape()));
  }
  if (alpha.size() != n || beta.rank() != 2 || beta.rows() != n) {
    throw ContractError("importance: attention covers " + std::to_string(alpha.size()) +
                        " steps but the sequence has " + std::to_string(n));
  }
  if (beta.cols() != l || direction.size() != l) {
    throw ShapeError("importance: beta " + shape_string(beta.shape()) + " or direction length " +
                     std::to_string(direction.size()) + " does not match latent " + std::to_string(l));
  }
  const std::size_t m = steps.cols();
  ImportanceMatrix out{Tensor::zeros({m, n})};
  std::vector<double> weighted(l);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < l; ++j) weighted[j] = beta.at(i, j) * direction[j];
    for (std::size_t k = 0; k < m; ++k) {
      const double x = steps.at(i, k);
      if (x == 0.0) continue;
      double r = 0.0;
      for (std::size_t j = 0; j < l; ++j) r += weighted[j] * embed.at(j, k);
      out.scores.at(k, i) = alpha[i] * r * x;
    }
  }
  return out;
}

}  // namespace

ImportanceMatrix importance_cl(std::span<const double> alpha, const Tensor& beta,
                               const Tensor& embed, const EventParams& event, Task task,
                               const Tensor& steps) {
  const Tensor positive = embed_event(task, true, event).second;
  return contract(alpha, beta, embed,
                  std::vector<double>(positive.values().begin(), positive.values().end()), steps);
}

ImportanceMatrix importance_cel(std::span<const double> alpha, const Tensor& beta,
                                const Tensor& embed, const Tensor& head_weight,
                                const Tensor& steps) {
  if (head_weight.rank() != 2 || head_weight.rows() != 2) {
    throw ShapeError("importance_cel: head weight must be 2 x l, got " +
                     shape_string(head_weight.shape()));
  }
  return contract(alpha, beta, embed, head_weight.row(0), steps);
}

ImportanceMatrix patient_importance(const ModelParams& model, LossKind loss, Task task,
                                    const BinnedSequence& seq) {
  if (!model.retain) {
    throw ContractError("feature importance needs a RETAIN model; " +
                        std::string(encoder_name(model.encoder)) + " has no attention weights");
  }
  const RetainOutput out = encode_retain(seq, *model.retain);
  if (loss == LossKind::cl) {
    return importance_cl(out.alpha, out.beta, model.retain->embed, model.event, task, seq.steps);
  }
  return importance_cel(out.alpha, out.beta, model.retain->embed, model.head.weight, seq.steps);
}

Heatmap aggregate_heatmap(std::span<const ImportanceMatrix> matrices) {
  if (matrices.empty()) throw ContractError("aggregate_heatmap: no importance matrices");
  const Shape shape = matrices.front().scores.shape();
  Heatmap heat{Tensor::zeros(shape), {}};
  for (const ImportanceMatrix& m : matrices) {
    if (m.scores.shape() != shape) {
      throw ContractError("aggregate_heatmap: mixed shapes " + shape_string(shape) + " and " +
                          shape_string(m.scores.shape()));
    }
    for (std::size_t c = 0; c < m.scores.size(); ++c) heat.values[c] += std::abs(m.scores[c]);
  }
  double peak = 0.0;
  for (double& v : heat.values.values()) {
    v /= static_cast<double>(matrices.size());
    peak = std::max(peak, v);
  }
  if (peak > 0.0) {
    for (double& v : heat.values.values()) v /= peak;
  }
  const std::size_t features = shape[0];
  const std::size_t bins = heat.values.cols();
  for (std::size_t f = 0; f < features; ++f) {
    double best = 0.0;
    for (std::size_t b = 0; b < bins; ++b) best = std::max(best, heat.values.at(f, b));
    heat.ranking.push_back({f, best});
  }
  std::stable_sort(heat.ranking.begin(), heat.ranking.end(),
                   [](const FeatureScore& a, const FeatureScore& b) { return a.score > b.score; });
  return heat;
}

std::vector<std::string> bin_labels(std::size_t bins) {
  std::vector<std::string> labels;
  const auto width = static_cast<long long>(kBinHours);
  for (std::size_t b = 0; b < bins; ++b) {
    const long long from = -static_cast<long long>(bins - b) * width;
    labels.push_back(std::to_string(from) + "h:" + std::to_string(from + width) + "h");
  }
  return labels;
}

void write_heatmap_csv(std::ostream& out, const Heatmap& heatmap, const FeatureSchema& schema) {
  const std::size_t bins = heatmap.values.cols();
  out << "feature";
  for (const std::string& label : bin_labels(bins)) out << ',' << label;
  out << '\n';
  const auto old = out.precision(17);
  for (std::size_t f = 0; f < heatmap.values.rows(); ++f) {
    out << schema.name(f);
    for (std::size_t b = 0; b < bins; ++b) out << ',' << heatmap.values.at(f, b);
    out << '\n';
  }
  out.precision(old);
}

void write_ranking_csv(std::ostream& out, const Heatmap& heatmap, const FeatureSchema& schema) {
  out << "rank,feature_id,name,score\n";
  const auto old = out.precision(17);
  for (std::size_t r = 0; r < heatmap.ranking.size(); ++r) {
    const FeatureScore& s = heatmap.ranking[r];
    out << (r + 1) << ',' << s.feature << ',' << schema.name(s.feature) << ',' << s.score << '\n';
  }
  out.precision(old);
}

}  // namespace cehr
