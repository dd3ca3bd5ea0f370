#include "cehr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cehr/errors.hpp"

namespace cehr {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("metric: " + std::to_string(scores.size()) + " scores but " +
                        std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("metric: labels must be 0 or 1");
  }
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

// Non-negative fraction with overflow detection; `ok` turns false once a
// reduced numerator or denominator no longer fits.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  bool ok = true;

  void add(std::uint64_t n, std::uint64_t d) {
    if (!ok) return;
    const std::uint64_t g = std::gcd(n, d);
    n /= g;
    d /= g;
    const std::uint64_t l = std::lcm(den, d);
    unsigned __int128 a = static_cast<unsigned __int128>(num) * (l / den);
    unsigned __int128 b = static_cast<unsigned __int128>(n) * (l / d);
    unsigned __int128 s = a + b;
    constexpr unsigned __int128 limit = static_cast<unsigned __int128>(1) << 62;
    if (l >= (std::uint64_t{1} << 62) || s >= limit) {
      ok = false;
      return;
    }
    const auto sum = static_cast<std::uint64_t>(s);
    const std::uint64_t r = std::gcd(sum, l);
    num = r ? sum / r : 0;
    den = r ? l / r : 1;
  }
};

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto idx = order_by_score(scores, false);
  std::int64_t positives = 0, negatives = 0, twice_rank_sum = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    // Shared midrank of 1-based ranks i+1..j, doubled to stay integral.
    const auto twice_mid = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[idx[t]] == 1) {
        ++positives;
        twice_rank_sum += twice_mid;
      } else {
        ++negatives;
      }
    }
    i = j;
  }
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("auroc: needs both positive and negative labels");
  }
  const std::int64_t twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * positives * negatives);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::uint64_t positives = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) throw UndefinedMetricError("auprc: needs at least one positive label");
  const auto idx = order_by_score(scores, true);

  Fraction exact;
  long double approx = 0.0L;
  std::uint64_t seen = 0, true_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::uint64_t block_pos = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      block_pos += labels[idx[j]] == 1 ? 1 : 0;
      ++j;
    }
    seen += j - i;
    true_pos += block_pos;
    if (block_pos > 0) {
      exact.add(block_pos * true_pos, seen);
      approx += static_cast<long double>(block_pos) * static_cast<long double>(true_pos) /
                static_cast<long double>(seen);
    }
    i = j;
  }
  if (exact.ok && exact.den < (std::uint64_t{1} << 52) / positives && exact.num < (std::uint64_t{1} << 53)) {
    return static_cast<double>(exact.num) / static_cast<double>(exact.den * positives);
  }
  return static_cast<double>(approx / static_cast<long double>(positives));
}

double silhouette(const Tensor& points, std::span<const int> labels) {
  if (points.rank() != 2 || points.rows() != labels.size()) {
    throw ContractError("silhouette: need one embedding row per label");
  }
  std::size_t counts[2] = {0, 0};
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("silhouette: labels must be 0 or 1");
    ++counts[y];
  }
  if (counts[0] < 2 || counts[1] < 2) {
    throw UndefinedMetricError("silhouette: each class needs at least two members");
  }
  const std::size_t n = points.rows(), d = points.cols();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double ss = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = points.at(i, c) - points.at(j, c);
        ss += diff * diff;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(ss);
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sums[2] = {0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sums[labels[j]] += dist[i * n + j];
    }
    const int own = labels[i];
    const double a = sums[own] / static_cast<double>(counts[own] - 1);
    const double b = sums[1 - own] / static_cast<double>(counts[1 - own]);
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

std::vector<CurvePoint> threshold_sweep(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double negatives = static_cast<double>(labels.size()) - positives;
  const auto idx = order_by_score(scores, true);
  std::vector<CurvePoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0, 1.0, 0.0});
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    CurvePoint p;
    p.threshold = scores[idx[i]];
    p.fpr = negatives > 0 ? fp / negatives : 0.0;
    p.tpr = positives > 0 ? tp / positives : 0.0;
    p.precision = tp / (tp + fp);
    p.recall = p.tpr;
    curve.push_back(p);
    i = j;
  }
  return curve;
}

std::vector<std::size_t> FoldAssignment::members(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] == f) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] != f) out.push_back(i);
  }
  return out;
}

FoldAssignment kfold_split(std::span<const int> labels, std::size_t k, std::mt19937_64& rng) {
  if (k < 2) throw ContractError("kfold_split: k must be at least 2 to hold data out");
  if (labels.size() < k) {
    throw ContractError("kfold_split: " + std::to_string(labels.size()) + " patients cannot fill " +
                        std::to_string(k) + " folds");
  }
  std::vector<std::size_t> groups[2];
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i] == 1 ? 1 : 0].push_back(i);
  FoldAssignment out;
  out.k = k;
  out.fold.assign(labels.size(), 0);
  std::size_t counter = 0;
  for (int g : {1, 0}) {
    std::shuffle(groups[g].begin(), groups[g].end(), rng);
    for (std::size_t i : groups[g]) out.fold[i] = counter++ % k;
  }
  return out;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace cehr
