#include "cehr/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cehr/autodiff.hpp"
#include "cehr/errors.hpp"

namespace cehr {

namespace {

struct FeatureScale {
  double mean;
  double sd;
};

// Raw-unit centre and spread per feature; preprocessing z-scores them away.
FeatureScale feature_scale(std::size_t f) {
  static constexpr std::array<FeatureScale, kNumVitals> vitals{{{85.0, 15.0},
                                                               {18.0, 4.0},
                                                               {95.0, 3.0},
                                                               {125.0, 18.0},
                                                               {75.0, 12.0},
                                                               {37.0, 0.6},
                                                               {170.0, 10.0},
                                                               {80.0, 18.0}}};
  if (f < kNumVitals) return vitals[f];
  const double k = static_cast<double>(f - kNumVitals);
  return {10.0 + 3.0 * k, 1.0 + 0.1 * k};
}

std::size_t count_at(const std::vector<double>& severity, const std::vector<double>& draws,
                     double gain, double offset) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < severity.size(); ++i) {
    n += draws[i] < sigmoid(gain * severity[i] + offset) ? 1 : 0;
  }
  return n;
}

// Offset whose realized positive count is closest to `target`. The count is
// monotone in the offset, so bisection on count < target converges.
double solve_offset(const std::vector<double>& severity, const std::vector<double>& draws,
                    double gain, std::size_t target) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_at(severity, draws, gain, mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const auto c_lo = static_cast<long long>(count_at(severity, draws, gain, lo));
  const auto c_hi = static_cast<long long>(count_at(severity, draws, gain, hi));
  const auto t = static_cast<long long>(target);
  return std::llabs(c_lo - t) < std::llabs(c_hi - t) ? lo : hi;
}

}  // namespace

void validate_generator_config(const GeneratorConfig& c) {
  for (double rate : c.positive_rates) {
    if (!(rate > 0.0 && rate < 1.0)) throw ContractError("generator: positive rates must lie in (0, 1)");
  }
  for (const SignalFeature& s : c.signal_features) {
    if (s.feature >= kNumFeatures) throw ContractError("generator: signal feature id out of range");
    if (!std::isfinite(s.effect)) throw ContractError("generator: effect sizes must be finite");
  }
  if (!(c.missingness_rate >= 0.0 && c.missingness_rate < 1.0)) {
    throw ContractError("generator: missingness_rate must lie in [0, 1)");
  }
  for (const auto& [feature, rate] : c.feature_missingness) {
    if (feature >= kNumFeatures || !(rate >= 0.0 && rate <= 1.0)) {
      throw ContractError("generator: per-feature missingness must be in [0, 1] for ids < 63");
    }
  }
  if (!(c.noise_std >= 0.0) || !(c.stay_log_std >= 0.0) || !(c.min_stay_hours >= 0.0) ||
      !(c.vital_interval_hours > 0.0) || !(c.lab_interval_hours > 0.0) ||
      !std::isfinite(c.severity_gain) || !std::isfinite(c.static_effect)) {
    throw ContractError("generator: invalid noise, stay or sampling parameters");
  }
}

Cohort generate_cohort(const GeneratorConfig& config) {
  validate_generator_config(config);
  const std::size_t n = config.n_patients;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> severity(n);
  for (double& s : severity) s = std_normal(rng);

  // Labels: one fixed uniform per patient and task, offset bisected on the
  // realized count so the rate is hit exactly up to count granularity.
  std::array<std::vector<bool>, 3> labels;
  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<double> draws(n);
    for (double& d : draws) d = unit(rng);
    labels[t].assign(n, false);
    if (n == 0) continue;
    const auto target = static_cast<std::size_t>(
        std::llround(config.positive_rates[t] * static_cast<double>(n)));
    const double offset = solve_offset(severity, draws, config.severity_gain, target);
    for (std::size_t i = 0; i < n; ++i) {
      labels[t][i] = draws[i] < sigmoid(config.severity_gain * severity[i] + offset);
    }
    const double realized = static_cast<double>(count_at(severity, draws, config.severity_gain, offset)) /
                            static_cast<double>(n);
    const double tolerance = std::max(0.01, 1.0 / static_cast<double>(n));
    if (std::abs(realized - config.positive_rates[t]) > tolerance) {
      std::ostringstream msg;
      msg << "generator: cannot reach positive rate " << config.positive_rates[t] << " for "
          << task_name(kAllTasks[t]) << " (best " << realized << ")";
      throw ContractError(msg.str());
    }
  }

  std::array<double, kNumFeatures> effect{};
  for (const SignalFeature& s : config.signal_features) effect[s.feature] = s.effect;
  std::array<double, kNumFeatures> missing{};
  missing.fill(config.missingness_rate);
  for (const auto& [feature, rate] : config.feature_missingness) missing[feature] = rate;

  static constexpr std::array<double, 5> race_weights{0.25, 0.35, 0.10, 0.20, 0.10};
  std::discrete_distribution<std::size_t> race_dist(race_weights.begin(), race_weights.end());
  std::lognormal_distribution<double> stay_dist(config.stay_log_mean, config.stay_log_std);

  Cohort cohort;
  cohort.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PatientRecord r;
    std::ostringstream id;
    id << "P" << i;
    r.id = id.str();
    r.admission = 0.0;
    r.end = std::max(config.min_stay_hours, stay_dist(rng));

    const double s = severity[i];
    r.statics.age = std::clamp(62.0 + 15.0 * std_normal(rng) + config.static_effect * s, 18.0, 100.0);
    r.statics.gender = std::string(kGenders[unit(rng) < 0.5 ? 0 : 1]);
    r.statics.race = std::string(kRaces[race_dist(rng)]);
    for (bool& flag : r.statics.comorbidities) flag = unit(rng) < 0.15;

    // Signal drift ramps from admission towards the first positive event, or
    // the end of the stay when there is none.
    double reference = r.end;
    for (std::size_t t = 0; t < 3; ++t) {
      Outcome& o = r.outcomes[t];
      o.positive = labels[t][i];
      if (o.positive) {
        const double earliest = std::min(config.min_stay_hours, r.end);
        o.event_time = earliest + unit(rng) * (r.end - earliest);
        reference = std::min(reference, *o.event_time);
      }
    }
    const double span = std::max(reference - r.admission, 1e-9);

    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const FeatureScale scale = feature_scale(f);
      const double patient_offset = 0.5 * std_normal(rng);
      const double interval = f < kNumVitals ? config.vital_interval_hours : config.lab_interval_hours;
      for (double t = r.admission + unit(rng) * interval; t <= r.end;
           t += interval * (0.75 + 0.5 * unit(rng))) {
        const double ramp = std::clamp((t - r.admission) / span, 0.0, 1.0);
        const double z = patient_offset + effect[f] * s * ramp + config.noise_std * std_normal(rng);
        const bool dropped = unit(rng) < missing[f];
        if (!dropped) r.timeline.push_back({t, f, scale.mean + scale.sd * z});
      }
    }
    std::stable_sort(r.timeline.begin(), r.timeline.end(),
                     [](const Measurement& a, const Measurement& b) { return a.time < b.time; });
    cohort.push_back(std::move(r));
  }
  return cohort;
}

std::vector<std::size_t> planted_truth(const GeneratorConfig& config) {
  std::vector<SignalFeature> signals;
  for (const SignalFeature& s : config.signal_features) {
    if (s.effect != 0.0) signals.push_back(s);
  }
  std::stable_sort(signals.begin(), signals.end(), [](const SignalFeature& a, const SignalFeature& b) {
    if (std::abs(a.effect) != std::abs(b.effect)) return std::abs(a.effect) > std::abs(b.effect);
    return a.feature < b.feature;
  });
  std::vector<std::size_t> ranked;
  for (const SignalFeature& s : signals) ranked.push_back(s.feature);
  return ranked;
}

}  // namespace cehr
