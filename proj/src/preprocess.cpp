#include "cehr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include "cehr/errors.hpp"

namespace cehr {

double nearest_rank(const std::vector<double>& sorted, double percentile) {
  if (sorted.empty()) throw ContractError("nearest_rank: empty sample");
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<long long>(std::ceil(percentile / 100.0 * n));
  rank = std::clamp<long long>(rank, 1, static_cast<long long>(sorted.size()));
  return sorted[static_cast<std::size_t>(rank - 1)];
}

ClipBounds compute_clip_bounds(const Cohort& cohort, double low, double high) {
  if (!(low >= 0.0 && high <= 100.0 && low < high)) {
    throw ContractError("compute_clip_bounds: need 0 <= low < high <= 100");
  }
  std::array<std::vector<double>, kNumFeatures> samples;
  std::vector<double> ages;
  for (const PatientRecord& r : cohort) {
    for (const Measurement& m : r.timeline) samples[m.feature].push_back(m.value);
    if (std::isfinite(r.statics.age)) ages.push_back(r.statics.age);
  }
  auto bounds_of = [&](std::vector<double>& v) -> std::optional<ValueRange> {
    if (v.empty()) return std::nullopt;
    std::stable_sort(v.begin(), v.end());
    return ValueRange{nearest_rank(v, low), nearest_rank(v, high)};
  };
  ClipBounds bounds;
  for (std::size_t f = 0; f < kNumFeatures; ++f) bounds.features[f] = bounds_of(samples[f]);
  bounds.age = bounds_of(ages);
  return bounds;
}

namespace {

bool inside(const std::optional<ValueRange>& range, double v) {
  return !range || (v >= range->low && v <= range->high);
}

Moments moments_of(const std::vector<double>& v) {
  Moments m;
  m.count = v.size();
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return m;
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return m;
}

double zscore(double v, const Moments& m) {
  if (!std::isfinite(v) || m.std == 0.0) return 0.0;
  return (v - m.mean) / m.std;
}

}  // namespace

Cohort apply_clip(const Cohort& cohort, const ClipBounds& bounds) {
  Cohort out = cohort;
  for (PatientRecord& r : out) {
    std::erase_if(r.timeline, [&](const Measurement& m) {
      return !inside(bounds.features[m.feature], m.value);
    });
    if (!inside(bounds.age, r.statics.age)) r.statics.age = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

NormStats compute_norm_stats(const Cohort& cohort) {
  std::array<std::vector<double>, kNumFeatures> samples;
  std::vector<double> ages;
  for (const PatientRecord& r : cohort) {
    for (const Measurement& m : r.timeline) samples[m.feature].push_back(m.value);
    if (std::isfinite(r.statics.age)) ages.push_back(r.statics.age);
  }
  NormStats stats;
  for (std::size_t f = 0; f < kNumFeatures; ++f) stats.features[f] = moments_of(samples[f]);
  stats.age = moments_of(ages);
  return stats;
}

Cohort normalize(const Cohort& cohort, const NormStats& stats) {
  Cohort out = cohort;
  for (PatientRecord& r : out) {
    for (Measurement& m : r.timeline) m.value = zscore(m.value, stats.features[m.feature]);
    r.statics.age = zscore(r.statics.age, stats.age);
  }
  return out;
}

Preprocessor Preprocessor::fit(const Cohort& train, double low, double high) {
  Preprocessor p;
  p.bounds = compute_clip_bounds(train, low, high);
  p.stats = compute_norm_stats(apply_clip(train, p.bounds));
  return p;
}

Cohort Preprocessor::transform(const Cohort& cohort) const {
  return normalize(apply_clip(cohort, bounds), stats);
}

StaticVector encode_statics(const PatientRecord& record) {
  StaticVector v{};
  v[0] = std::isfinite(record.statics.age) ? record.statics.age : 0.0;
  auto one_hot = [&](std::string_view value, auto& categories, std::size_t offset,
                     const char* what) {
    for (std::size_t i = 0; i < categories.size(); ++i) {
      if (categories[i] == value) {
        v[offset + i] = 1.0;
        return;
      }
    }
    throw ValidationError("record '" + record.id + "': unknown " + what + " '" +
                          std::string(value) + "'");
  };
  one_hot(record.statics.gender, kGenders, 1, "gender");
  one_hot(record.statics.race, kRaces, 3, "race");
  for (std::size_t i = 0; i < kNumComorbidities; ++i) {
    v[8 + i] = record.statics.comorbidities[i] ? 1.0 : 0.0;
  }
  return v;
}

EndpointStats estimate_endpoint_stats(const Cohort& cohort, Task task) {
  std::vector<double> elapsed;
  for (const PatientRecord& r : cohort) {
    const Outcome& o = r.outcome(task);
    if (o.positive && o.event_time) elapsed.push_back(*o.event_time - r.admission);
  }
  if (elapsed.size() < 2) {
    throw ContractError("estimate_endpoint_stats: " + std::string(task_name(task)) + " has " +
                        std::to_string(elapsed.size()) +
                        " positive patients; at least 2 are needed");
  }
  const Moments m = moments_of(elapsed);
  return {m.mean, m.std};
}

EndpointDraw sample_negative_endpoint(const EndpointStats& stats, const PatientRecord& record,
                                      double window_hours, std::mt19937_64& rng) {
  const double stay = record.end - record.admission;
  double elapsed = stats.mean;
  if (stats.std > 0.0) elapsed = std::normal_distribution<double>(stats.mean, stats.std)(rng);
  if (stay < window_hours) return {record.end, true};
  elapsed = std::clamp(elapsed, window_hours, stay);
  return {record.admission + elapsed, false};
}

BinnedSequence bin_timeline(const PatientRecord& record, double window_hours, double endpoint,
                            Task task) {
  const double bins_real = window_hours / kBinHours;
  const auto bins = static_cast<std::size_t>(std::llround(bins_real));
  if (!(window_hours > 0.0) || std::abs(bins_real - static_cast<double>(bins)) > 1e-9) {
    throw ContractError("bin_timeline: window must be a positive multiple of 6 hours");
  }
  if (!(endpoint >= record.admission && endpoint <= record.end)) {
    std::ostringstream msg;
    msg << "bin_timeline: endpoint " << endpoint << " outside the stay of record '" << record.id
        << "'";
    throw ContractError(msg.str());
  }
  const double start = endpoint - window_hours;

  // Sorting by (bin, feature, value) makes the per-cell sums independent of
  // the order the timeline was recorded in.
  std::vector<std::tuple<std::size_t, std::size_t, double>> cells;
  for (const Measurement& m : record.timeline) {
    if (m.time < start || m.time >= endpoint) continue;
    auto bin = static_cast<std::size_t>(std::floor((m.time - start) / kBinHours));
    bin = std::min(bin, bins - 1);
    cells.emplace_back(bin, m.feature, m.value);
  }
  std::sort(cells.begin(), cells.end());

  BinnedSequence seq;
  seq.steps = Tensor::zeros({bins, kNumFeatures});
  for (std::size_t i = 0; i < cells.size();) {
    const auto [bin, feature, first] = cells[i];
    double total = 0.0;
    std::size_t j = i;
    for (; j < cells.size() && std::get<0>(cells[j]) == bin && std::get<1>(cells[j]) == feature; ++j) {
      total += std::get<2>(cells[j]);
    }
    seq.steps.at(bin, feature) = total / static_cast<double>(j - i);
    i = j;
  }
  seq.statics = encode_statics(record);
  seq.label = record.label(task);
  return seq;
}

Cohort restrict_positives(const Cohort& cohort, Task task, double target_rate,
                          std::mt19937_64& rng) {
  const std::size_t positives = count_positives(cohort, task);
  const std::size_t negatives = cohort.size() - positives;
  const double current = positive_rate(cohort, task);
  if (target_rate > current + 1e-12) {
    std::ostringstream msg;
    msg << "restrict_positives: target rate " << target_rate << " exceeds current "
        << task_name(task) << " rate " << current;
    throw ContractError(msg.str());
  }
  if (target_rate < 0.05 - 1e-12 && target_rate < current - 1e-12) {
    throw ContractError("restrict_positives: target rate below the 5% minimum");
  }
  const auto keep = static_cast<std::size_t>(
      std::llround(target_rate * static_cast<double>(negatives) / (1.0 - target_rate)));
  if (keep >= positives) return cohort;

  std::vector<std::size_t> pos_rows;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (cohort[i].outcome(task).positive) pos_rows.push_back(i);
  }
  std::shuffle(pos_rows.begin(), pos_rows.end(), rng);
  std::vector<bool> retained(cohort.size(), true);
  for (std::size_t k = keep; k < pos_rows.size(); ++k) retained[pos_rows[k]] = false;

  Cohort out;
  out.reserve(negatives + keep);
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (retained[i]) out.push_back(cohort[i]);
  }
  return out;
}

}  // namespace cehr
