#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cehr {

inline constexpr std::size_t kNumVitals = 8;
inline constexpr std::size_t kNumLabs = 55;
inline constexpr std::size_t kNumFeatures = kNumVitals + kNumLabs;
inline constexpr std::size_t kNumComorbidities = 12;
inline constexpr std::size_t kStaticDim = 1 + 2 + 5 + kNumComorbidities;
inline constexpr double kBinHours = 6.0;

enum class Task : std::size_t { mortality = 0, intubation = 1, icu_transfer = 2 };
inline constexpr std::array<Task, 3> kAllTasks{Task::mortality, Task::intubation,
                                               Task::icu_transfer};

std::string_view task_name(Task task);
/// Accepts "mortality", "intubation", "icu_transfer" (also "icu").
Task parse_task(std::string_view name);

inline constexpr std::array<std::string_view, 2> kGenders{"male", "female"};
inline constexpr std::array<std::string_view, 5> kRaces{"african_american", "white", "asian",
                                                         "other", "unknown"};

struct Measurement {
  double time = 0.0;  // hours
  std::size_t feature = 0;
  double value = 0.0;

  bool operator==(const Measurement&) const = default;
};

struct Outcome {
  bool positive = false;
  std::optional<double> event_time;  // hours, present iff positive

  bool operator==(const Outcome&) const = default;
};

struct StaticRaw {
  double age = 0.0;
  std::string gender;
  std::string race;
  std::array<bool, kNumComorbidities> comorbidities{};

  bool operator==(const StaticRaw&) const = default;
};

struct PatientRecord {
  std::string id;
  double admission = 0.0;
  double end = 0.0;
  StaticRaw statics;
  std::vector<Measurement> timeline;
  std::array<Outcome, 3> outcomes{};

  const Outcome& outcome(Task task) const { return outcomes[static_cast<std::size_t>(task)]; }
  Outcome& outcome(Task task) { return outcomes[static_cast<std::size_t>(task)]; }
  int label(Task task) const { return outcome(task).positive ? 1 : 0; }

  bool operator==(const PatientRecord&) const = default;
};

using Cohort = std::vector<PatientRecord>;

/// Throws ValidationError naming the record if any invariant fails: end before
/// admission, timestamps outside the stay, feature ids >= 63, positive outcomes
/// without an in-stay event time, or negative outcomes carrying one.
void validate_record(const PatientRecord& record);

/// One JSON object per line:
///   {"id", "admit", "end", "static": {"age", "gender", "race", "comorbidities": [12]},
///    "timeline": [[t, feature, value], ...],
///    "outcomes": {"mortality": {"label", "event_time"?}, "intubation": ..., "icu_transfer": ...}}
/// Blank lines are skipped. Errors carry the 1-based line number.
Cohort read_cohort(std::istream& in);
Cohort load_cohort(const std::string& path);
void write_cohort(std::ostream& out, const Cohort& cohort);
void save_cohort(const std::string& path, const Cohort& cohort);

/// Index -> display name for the 63 longitudinal features.
struct FeatureSchema {
  std::vector<std::string> names;

  static FeatureSchema defaults();
  const std::string& name(std::size_t feature) const { return names.at(feature); }
};

FeatureSchema load_schema(const std::string& path);
void save_schema(const std::string& path, const FeatureSchema& schema);

double positive_rate(const Cohort& cohort, Task task);
std::size_t count_positives(const Cohort& cohort, Task task);

}  // namespace cehr
