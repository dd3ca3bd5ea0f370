#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cehr/tensor.hpp"

namespace cehr {

/// Mann-Whitney estimate P(score+ > score-) + 1/2 P(tie), computed from
/// integer rank sums so the result is exact up to one final division.
/// Throws UndefinedMetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: each positive is credited the precision at the
/// threshold of its tie block, i.e. sum_b p_b * TP_b / n_b over descending
/// score blocks, divided by the positive count. Constant scores give the
/// prevalence. Exact rational accumulation while the denominators fit in
/// 64 bits. Throws UndefinedMetricError with no positives.
double auprc(std::span<const double> scores, std::span<const int> labels);

/// Mean silhouette coefficient under Euclidean distance for a two-class
/// labelling of the rows of `points` (N x d). Exact O(N^2). Throws
/// UndefinedMetricError unless each class has at least two members.
double silhouette(const Tensor& points, std::span<const int> labels);

struct CurvePoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
  double precision = 1.0;
  double recall = 0.0;
};

/// ROC and PR coordinates at every distinct score (predict positive when
/// score >= threshold), preceded by the empty-prediction point.
std::vector<CurvePoint> threshold_sweep(std::span<const double> scores, std::span<const int> labels);

struct FoldAssignment {
  std::vector<std::size_t> fold;  // per patient, in 0..k-1
  std::size_t k = 0;

  std::vector<std::size_t> members(std::size_t f) const;
  std::vector<std::size_t> complement(std::size_t f) const;
};

/// Stratified k-fold partition: positives then negatives are shuffled and
/// dealt round-robin with one running counter, so fold sizes and per-fold
/// positive counts each differ by at most one. Throws ContractError when
/// k < 2 or there are fewer patients than folds.
FoldAssignment kfold_split(std::span<const int> labels, std::size_t k, std::mt19937_64& rng);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

Summary summarize(std::span<const double> values);

}  // namespace cehr
