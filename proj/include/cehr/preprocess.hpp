#pragma once

#include <array>
#include <optional>
#include <random>

#include "cehr/cohort.hpp"
#include "cehr/tensor.hpp"

namespace cehr {

struct ValueRange {
  double low = 0.0;
  double high = 0.0;
};

/// Percentile bounds per longitudinal feature plus age. A feature without
/// observations has no bounds; its values pass through unclipped.
struct ClipBounds {
  std::array<std::optional<ValueRange>, kNumFeatures> features{};
  std::optional<ValueRange> age;
};

struct Moments {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation; 0 when n < 2
  std::size_t count = 0;
};

struct NormStats {
  std::array<Moments, kNumFeatures> features{};
  Moments age;
};

using StaticVector = std::array<double, kStaticDim>;

/// Model input for one patient and one task: n x 63 bin means, the 20-dim
/// static vector and the task label.
struct BinnedSequence {
  Tensor steps;
  StaticVector statics{};
  int label = 0;
  std::size_t num_steps() const { return steps.rows(); }
};

struct EndpointStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
};

struct EndpointDraw {
  double time = 0.0;
  /// Stay shorter than the window: the endpoint is the end of the stay and
  /// the leading bins fall before admission (zero-filled).
  bool short_stay = false;
};

/// Nearest-rank percentile of an ascending sample: the value at 1-based rank
/// ceil(p / 100 * n), clamped to [1, n].
double nearest_rank(const std::vector<double>& sorted, double percentile);

/// Per-feature bounds at the given percentiles. Expects training-fold records.
ClipBounds compute_clip_bounds(const Cohort& cohort, double low = 0.5, double high = 99.5);

/// Drops measurements (and ages) outside their feature's bounds. Dropped ages
/// become NaN and are encoded as missing downstream.
Cohort apply_clip(const Cohort& cohort, const ClipBounds& bounds);

/// Mean and sample std of every feature over the values present.
NormStats compute_norm_stats(const Cohort& cohort);

/// value -> (value - mean) / std for measurements and age; a zero std maps
/// everything to 0, as does a missing (NaN) age.
Cohort normalize(const Cohort& cohort, const NormStats& stats);

/// Fit-on-train, apply-anywhere bundle of clipping and z-scoring.
struct Preprocessor {
  ClipBounds bounds;
  NormStats stats;

  static Preprocessor fit(const Cohort& train, double low = 0.5, double high = 99.5);
  Cohort transform(const Cohort& cohort) const;
};

/// [age | gender one-hot (2) | race one-hot (5) | comorbidity flags (12)].
/// Expects a normalized record (age already a z-score). Throws
/// ValidationError on a gender or race outside the schema.
StaticVector encode_statics(const PatientRecord& record);

/// Mean and sample std of event_time - admission over the task's positives.
/// Throws ContractError with fewer than two positives.
EndpointStats estimate_endpoint_stats(const Cohort& cohort, Task task);

/// Draws elapsed ~ Normal(mean, std), clamps it to [window, stay length] and
/// returns admission + elapsed.
EndpointDraw sample_negative_endpoint(const EndpointStats& stats, const PatientRecord& record,
                                      double window_hours, std::mt19937_64& rng);

/// Averages measurements into window/6 bins covering [endpoint - window,
/// endpoint). Cells without measurements are 0. Throws ContractError when the
/// window is not a positive multiple of 6 h or the endpoint lies outside the stay.
BinnedSequence bin_timeline(const PatientRecord& record, double window_hours, double endpoint,
                            Task task);

/// Removes a uniformly random subset of the task's positives so the positive
/// fraction lands within one patient of `target_rate`. Record order is kept.
Cohort restrict_positives(const Cohort& cohort, Task task, double target_rate,
                          std::mt19937_64& rng);

}  // namespace cehr
