#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "cehr/cohort.hpp"

namespace cehr {

struct SignalFeature {
  std::size_t feature = 0;
  double effect = 0.0;  // drift, in feature standard deviations per unit severity
};

/// Synthetic cohort recipe. Every patient carries a latent severity
/// s ~ N(0, 1); signal features drift by effect * s as the stay approaches its
/// reference point, and each task's outcome is Bernoulli(logistic(gain * s + offset))
/// with the offset solved so the realized positive count matches the target.
struct GeneratorConfig {
  std::size_t n_patients = 2000;
  std::array<double, 3> positive_rates{0.25, 0.25, 0.25};
  std::vector<SignalFeature> signal_features{{2, -4.5}, {17, 1.5}, {41, 0.9}};
  double noise_std = 1.0;
  double missingness_rate = 0.3;
  std::map<std::size_t, double> feature_missingness;  // per-feature override, may be 1
  double severity_gain = 4.0;
  double static_effect = 0.0;  // age shift (years) per unit severity
  double stay_log_mean = 4.97;  // log-hours, median ~6 days
  double stay_log_std = 0.5;
  double min_stay_hours = 48.0;
  double vital_interval_hours = 4.0;
  double lab_interval_hours = 12.0;
  std::uint64_t seed = 1;
};

/// Throws ContractError on an invalid config or when a target rate cannot be
/// met within max(1%, 1/n) after bisection.
Cohort generate_cohort(const GeneratorConfig& config);

/// Signal features ordered by |effect| descending, ties by feature index.
/// Features with zero effect are not part of the planted truth.
std::vector<std::size_t> planted_truth(const GeneratorConfig& config);

void validate_generator_config(const GeneratorConfig& config);

}  // namespace cehr
