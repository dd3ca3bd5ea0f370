#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cehr/errors.hpp"
#include "cehr/metrics.hpp"

using namespace cehr;

namespace {

// Pairwise definition: P(s+ > s-) + 1/2 P(s+ == s-).
double auroc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  long long twice = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      ++pairs;
      twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
    }
  }
  return static_cast<double>(twice) / static_cast<double>(2 * pairs);
}

// Each positive is credited the precision of the set {score >= its score};
// accumulated as an exact fraction.
double auprc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  long long num = 0, den = 1, positives = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    ++positives;
    long long tp = 0, all = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] >= s[i]) {
        ++all;
        tp += y[j];
      }
    }
    num = num * all + tp * den;
    den *= all;
    const long long g = std::gcd(num, den);
    num /= g;
    den /= g;
  }
  den *= positives;
  const long long g = std::gcd(num, den);
  return static_cast<double>(num / g) / static_cast<double>(den / g);
}

}  // namespace

TEST(Auroc, MatchesTheOracleExhaustively) {
  const double alphabet[3] = {0.1, 0.5, 0.9};
  for (std::size_t n = 2; n <= 6; ++n) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 3;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t c = 0; c < combos; ++c) {
      for (std::size_t i = 0, v = c; i < n; ++i, v /= 3) s[i] = alphabet[v % 3];
      for (std::size_t mask = 0; mask < (1u << n); ++mask) {
        for (std::size_t i = 0; i < n; ++i) y[i] = (mask >> i) & 1;
        const auto pos = std::count(y.begin(), y.end(), 1);
        if (pos == 0) {
          EXPECT_THROW(auprc(s, y), UndefinedMetricError);
          continue;
        }
        ASSERT_EQ(auprc(s, y), auprc_oracle(s, y));
        if (pos == static_cast<long>(n)) {
          EXPECT_THROW(auroc(s, y), UndefinedMetricError);
          continue;
        }
        ASSERT_EQ(auroc(s, y), auroc_oracle(s, y));
      }
    }
  }
}

TEST(Auroc, PerfectAndConstantScores) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<int> y{1, 1, 0, 0};
  EXPECT_EQ(auroc(s, y), 1.0);
  EXPECT_EQ(auprc(s, y), 1.0);
  const std::vector<double> flat(10, 0.4);
  const std::vector<int> y3{1, 0, 0, 1, 0, 0, 0, 1, 0, 0};
  EXPECT_EQ(auroc(flat, y3), 0.5);
  EXPECT_DOUBLE_EQ(auprc(flat, y3), 0.3);
}

TEST(Auroc, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<double> s(200), t(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    t[i] = std::exp(3 * s[i]) + 1;
    y[i] = u(rng) + s[i] > 0;
  }
  EXPECT_EQ(auroc(s, y), auroc(t, y));
  EXPECT_EQ(auprc(s, y), auprc(t, y));
}

TEST(Auroc, InputsAreValidated) {
  EXPECT_THROW(auroc(std::vector<double>{0.1}, std::vector<int>{1, 0}), ContractError);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}), ContractError);
}

TEST(Silhouette, SeparatedClustersScoreHigh) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0, 0.1);
  Tensor x = Tensor::zeros({40, 3});
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    y[i] = i < 20;
    for (std::size_t d = 0; d < 3; ++d) x.at(i, d) = (y[i] ? 5.0 : -5.0) + noise(rng);
  }
  EXPECT_GT(silhouette(x, y), 0.9);
  std::shuffle(y.begin(), y.end(), rng);
  EXPECT_NEAR(silhouette(x, y), 0.0, 0.15);
}

TEST(Silhouette, HandComputedFourPoints) {
  // Points on a line: 0, 1 (class 0) and 4, 6 (class 1).
  const Tensor x = Tensor::matrix(4, 1, {0, 1, 4, 6});
  const std::vector<int> y{0, 0, 1, 1};
  const double s0 = 1 - 1.0 / 5.0;          // a = 1, b = 5
  const double s1 = 1 - 1.0 / 4.0;          // a = 1, b = 4
  const double s2 = 1 - 2.0 / 3.5;          // a = 2, b = 3.5
  const double s3 = 1 - 2.0 / 5.5;          // a = 2, b = 5.5
  EXPECT_NEAR(silhouette(x, y), (s0 + s1 + s2 + s3) / 4, 1e-15);
}

TEST(Silhouette, SingletonClassIsUndefined) {
  const Tensor x = Tensor::matrix(3, 1, {0, 1, 4});
  EXPECT_THROW(silhouette(x, std::vector<int>{0, 0, 1}), UndefinedMetricError);
}

TEST(ThresholdSweep, StartsEmptyAndEndsAtEverything) {
  const std::vector<double> s{0.9, 0.4, 0.4, 0.1};
  const std::vector<int> y{1, 0, 1, 0};
  const auto curve = threshold_sweep(s, y);
  ASSERT_EQ(curve.size(), 4u);
  EXPECT_TRUE(std::isinf(curve[0].threshold));
  EXPECT_EQ(curve[0].tpr, 0.0);
  EXPECT_EQ(curve[0].precision, 1.0);
  EXPECT_EQ(curve[1].threshold, 0.9);
  EXPECT_EQ(curve[1].tpr, 0.5);
  EXPECT_EQ(curve[2].fpr, 0.5);
  EXPECT_EQ(curve[2].precision, 2.0 / 3.0);
  EXPECT_EQ(curve[3].fpr, 1.0);
  EXPECT_EQ(curve[3].recall, 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_GE(curve[i].fpr, curve[i - 1].fpr);
    EXPECT_GE(curve[i].tpr, curve[i - 1].tpr);
  }
}

TEST(KFold, SizesAndStrata) {
  std::vector<int> y(100, 0);
  std::fill(y.begin(), y.begin() + 10, 1);
  std::mt19937_64 rng(5);
  const FoldAssignment a = kfold_split(y, 10, rng);
  std::vector<std::size_t> seen;
  for (std::size_t f = 0; f < 10; ++f) {
    const auto m = a.members(f);
    EXPECT_EQ(m.size(), 10u);
    EXPECT_EQ(std::count_if(m.begin(), m.end(), [&](std::size_t i) { return y[i] == 1; }), 1);
    EXPECT_EQ(a.complement(f).size(), 90u);
    seen.insert(seen.end(), m.begin(), m.end());
  }
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> all(100);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(seen, all);
}

TEST(KFold, TenPercentOfAThousand) {
  std::vector<int> y(1000, 0);
  for (std::size_t i = 0; i < 1000; i += 10) y[i] = 1;
  std::mt19937_64 rng(6);
  const FoldAssignment a = kfold_split(y, 10, rng);
  for (std::size_t f = 0; f < 10; ++f) {
    const auto m = a.members(f);
    const auto pos = std::count_if(m.begin(), m.end(), [&](std::size_t i) { return y[i] == 1; });
    EXPECT_GE(pos, 9);
    EXPECT_LE(pos, 11);
  }
}

TEST(KFold, RejectsDegenerateRequests) {
  std::mt19937_64 rng(7);
  const std::vector<int> y{1, 0, 1, 0};
  EXPECT_THROW(kfold_split(y, 1, rng), ContractError);
  EXPECT_THROW(kfold_split(y, 5, rng), ContractError);
}

TEST(KFold, SeededShuffle) {
  std::vector<int> y(50, 0);
  std::fill(y.begin(), y.begin() + 15, 1);
  std::mt19937_64 r1(8), r2(8), r3(9);
  EXPECT_EQ(kfold_split(y, 5, r1).fold, kfold_split(y, 5, r2).fold);
  EXPECT_NE(kfold_split(y, 5, r1).fold, kfold_split(y, 5, r3).fold);
}

TEST(Summary, SampleStandardDeviation) {
  const std::vector<double> v{1, 2, 3, 4};
  const Summary s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(summarize(std::vector<double>{7}).std, 0.0);
}
