#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cehr/autodiff.hpp"
#include "cehr/models.hpp"

namespace cehr {

/// Anchor u with its connected event label, m same-outcome peers and q
/// opposite-outcome peers (indices into the training fold).
struct ContrastiveBatch {
  std::size_t anchor = 0;
  int label = 0;
  std::vector<std::size_t> same;
  std::vector<std::size_t> opposite;
};

/// Uniform without-replacement sampling inside each label group of a fold.
class ContrastiveSampler {
 public:
  explicit ContrastiveSampler(std::span<const int> labels);

  /// Throws ContractError naming the group when it has too few members.
  ContrastiveBatch sample(std::size_t anchor, std::size_t m, std::size_t q,
                          std::mt19937_64& rng) const;

 private:
  std::vector<int> labels_;
  std::vector<std::size_t> groups_[2];
};

ContrastiveBatch sample_contrastive_batch(std::span<const int> labels, std::size_t anchor,
                                          std::size_t m, std::size_t q, std::mt19937_64& rng);

struct ContrastiveWeights {
  double label = 0.8;  // a: event-patient terms
  double peer = 0.2;   // b: patient-patient terms
};

/// a (L_ep + L_ep*) + b (L_pp + L_pp*) with
///   L_ep   = -log s( C_e  . C_p(u))      C_e: event node the anchor connects to
///   L_ep*  = -log s(-C_e* . C_p(u))      C_e*: the other event node
///   L_pp   = -sum_j log s( C_p(j) . C_p(u))   same-outcome peers
///   L_pp*  = -sum_j log s(-C_p*(j) . C_p(u))  opposite-outcome peers
Var cl_loss(Var anchor, Var connected_event, Var opposite_event, std::span<const Var> same,
            std::span<const Var> opposite, ContrastiveWeights weights = {});

double cl_loss(const Tensor& anchor, const Tensor& connected_event, const Tensor& opposite_event,
               std::span<const Tensor> same, std::span<const Tensor> opposite,
               ContrastiveWeights weights = {});

/// Binary cross-entropy of a single patient against the positive component
/// of sigmoid(W_c C_p + B_c). Callers average over the batch.
Var cel_loss(Var context, int label, const HeadT<Var>& head);
double cel_loss(const Tensor& context, int label, const CelHead& head);

/// s(C_e+ . C_p) with C_e+ the task's positive event embedding.
double predict_cl(const Tensor& context, Task task, const EventParams& event);
/// Positive component of sigmoid(W_c C_p + B_c).
double predict_cel(const Tensor& context, const CelHead& head);

}  // namespace cehr
