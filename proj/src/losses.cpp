#include "cehr/losses.hpp"

#include <algorithm>

#include "cehr/errors.hpp"

namespace cehr {

ContrastiveSampler::ContrastiveSampler(std::span<const int> labels)
    : labels_(labels.begin(), labels.end()) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] != 0 && labels_[i] != 1) throw ContractError("labels must be 0 or 1");
    groups_[labels_[i]].push_back(i);
  }
}

namespace {

// k distinct members of `group`, never `exclude`, by rejection. Uniform over
// k-subsets; the draw order is deterministic for a given generator state.
std::vector<std::size_t> draw_distinct(const std::vector<std::size_t>& group, std::size_t k,
                                       std::size_t exclude, std::mt19937_64& rng) {
  std::vector<std::size_t> picked;
  picked.reserve(k);
  std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
  while (picked.size() < k) {
    const std::size_t candidate = group[pick(rng)];
    if (candidate == exclude) continue;
    if (std::find(picked.begin(), picked.end(), candidate) != picked.end()) continue;
    picked.push_back(candidate);
  }
  return picked;
}

}  // namespace

ContrastiveBatch ContrastiveSampler::sample(std::size_t anchor, std::size_t m, std::size_t q,
                                            std::mt19937_64& rng) const {
  if (anchor >= labels_.size()) throw ContractError("contrastive batch: anchor out of range");
  const int label = labels_[anchor];
  const auto& same = groups_[label];
  const auto& other = groups_[1 - label];
  const char* same_name = label == 1 ? "positive" : "negative";
  const char* other_name = label == 1 ? "negative" : "positive";
  if (same.size() < m + 1) {
    throw ContractError(std::string("contrastive batch: ") + same_name + " group has " +
                        std::to_string(same.size() - 1) + " peers besides the anchor, need " +
                        std::to_string(m));
  }
  if (other.size() < q) {
    throw ContractError(std::string("contrastive batch: ") + other_name + " group has " +
                        std::to_string(other.size()) + " patients, need " + std::to_string(q));
  }
  ContrastiveBatch batch;
  batch.anchor = anchor;
  batch.label = label;
  batch.same = draw_distinct(same, m, anchor, rng);
  batch.opposite = draw_distinct(other, q, anchor, rng);
  return batch;
}

ContrastiveBatch sample_contrastive_batch(std::span<const int> labels, std::size_t anchor,
                                          std::size_t m, std::size_t q, std::mt19937_64& rng) {
  return ContrastiveSampler(labels).sample(anchor, m, q, rng);
}

Var cl_loss(Var anchor, Var connected_event, Var opposite_event, std::span<const Var> same,
            std::span<const Var> opposite, ContrastiveWeights w) {
  // Each term is -log s(+-x . u); accumulate the negated log-sigmoids.
  Var label_terms = log_sigmoid(dot(connected_event, anchor)) +
                    log_sigmoid(neg(dot(opposite_event, anchor)));
  Var loss = scale(label_terms, -w.label);
  for (const Var& peer : same) loss = loss + scale(log_sigmoid(dot(peer, anchor)), -w.peer);
  for (const Var& peer : opposite) loss = loss + scale(log_sigmoid(neg(dot(peer, anchor))), -w.peer);
  return loss;
}

double cl_loss(const Tensor& anchor, const Tensor& connected_event, const Tensor& opposite_event,
               std::span<const Tensor> same, std::span<const Tensor> opposite,
               ContrastiveWeights weights) {
  Tape tape;
  Var u = tape.constant(anchor);
  std::vector<Var> s, o;
  for (const Tensor& t : same) s.push_back(tape.constant(t));
  for (const Tensor& t : opposite) o.push_back(tape.constant(t));
  return cl_loss(u, tape.constant(connected_event), tape.constant(opposite_event), s, o, weights)
      .value()
      .item();
}

Var cel_loss(Var context, int label, const HeadT<Var>& head) {
  Var logit = element(matvec(head.weight, context) + head.bias, 0);
  return label == 1 ? neg(log_sigmoid(logit)) : neg(log_sigmoid(neg(logit)));
}

double cel_loss(const Tensor& context, int label, const CelHead& head) {
  Tape tape;
  HeadT<Var> vars{tape.constant(head.weight), tape.constant(head.bias)};
  return cel_loss(tape.constant(context), label, vars).value().item();
}

double predict_cl(const Tensor& context, Task task, const EventParams& event) {
  const Tensor positive = embed_event(task, true, event).second;
  if (positive.size() != context.size()) {
    throw ShapeError("predict_cl: event " + shape_string(positive.shape()) + " vs patient " +
                     shape_string(context.shape()));
  }
  double score = 0.0;
  for (std::size_t i = 0; i < context.size(); ++i) score += positive[i] * context[i];
  return sigmoid(score);
}

double predict_cel(const Tensor& context, const CelHead& head) {
  if (head.weight.cols() != context.size()) {
    throw ShapeError("predict_cel: head " + shape_string(head.weight.shape()) + " vs patient " +
                     shape_string(context.shape()));
  }
  double logit = head.bias[0];
  for (std::size_t j = 0; j < context.size(); ++j) logit += head.weight.at(0, j) * context[j];
  return sigmoid(logit);
}

}  // namespace cehr
