#include "cehr/cohort.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "cehr/errors.hpp"

namespace cehr {

using json = nlohmann::json;

std::string_view task_name(Task task) {
  switch (task) {
    case Task::mortality:
      return "mortality";
    case Task::intubation:
      return "intubation";
    case Task::icu_transfer:
      return "icu_transfer";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  if (name == "mortality") return Task::mortality;
  if (name == "intubation") return Task::intubation;
  if (name == "icu_transfer" || name == "icu") return Task::icu_transfer;
  throw ValidationError("unknown task '" + std::string(name) + "'");
}

void validate_record(const PatientRecord& r) {
  const std::string who = "record '" + r.id + "': ";
  if (!std::isfinite(r.admission) || !std::isfinite(r.end) || r.end < r.admission) {
    throw ValidationError(who + "end time precedes admission");
  }
  for (const Measurement& m : r.timeline) {
    if (m.feature >= kNumFeatures) {
      throw ValidationError(who + "feature id " + std::to_string(m.feature) + " out of range");
    }
    if (!(m.time >= r.admission && m.time <= r.end)) {
      std::ostringstream msg;
      msg << who << "timestamp " << m.time << " outside stay [" << r.admission << ", " << r.end
          << "]";
      throw ValidationError(msg.str());
    }
    if (!std::isfinite(m.value)) throw ValidationError(who + "non-finite measurement value");
  }
  for (Task task : kAllTasks) {
    const Outcome& o = r.outcome(task);
    if (o.positive) {
      if (!o.event_time || !(*o.event_time >= r.admission && *o.event_time <= r.end)) {
        throw ValidationError(who + std::string(task_name(task)) +
                              " is positive but its event time is missing or outside the stay");
      }
    } else if (o.event_time) {
      throw ValidationError(who + std::string(task_name(task)) +
                            " is negative but carries an event time");
    }
  }
}

namespace {

bool parse_label(const json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) {
    const auto v = j.get<long long>();
    if (v == 0 || v == 1) return v == 1;
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "positive") return true;
    if (s == "negative") return false;
  }
  throw ParseError("label must be 0/1, true/false or \"positive\"/\"negative\"");
}

PatientRecord record_from_json(const json& j) {
  PatientRecord r;
  r.id = j.at("id").get<std::string>();
  r.admission = j.at("admit").get<double>();
  r.end = j.at("end").get<double>();

  const json& st = j.at("static");
  r.statics.age = st.at("age").get<double>();
  r.statics.gender = st.at("gender").get<std::string>();
  r.statics.race = st.at("race").get<std::string>();
  const json& flags = st.at("comorbidities");
  if (!flags.is_array() || flags.size() != kNumComorbidities) {
    throw ParseError("comorbidities must be an array of 12 flags");
  }
  for (std::size_t i = 0; i < kNumComorbidities; ++i) {
    r.statics.comorbidities[i] = flags[i].is_boolean() ? flags[i].get<bool>() : flags[i].get<int>() != 0;
  }

  for (const json& entry : j.at("timeline")) {
    if (!entry.is_array() || entry.size() != 3) {
      throw ParseError("timeline entries must be [time, feature, value]");
    }
    const auto feature = entry[1].get<long long>();
    if (feature < 0) throw ParseError("negative feature id");
    r.timeline.push_back({entry[0].get<double>(), static_cast<std::size_t>(feature),
                          entry[2].get<double>()});
  }

  const json& outcomes = j.at("outcomes");
  for (Task task : kAllTasks) {
    const json& o = outcomes.at(std::string(task_name(task)));
    Outcome& out = r.outcome(task);
    out.positive = parse_label(o.at("label"));
    if (o.contains("event_time") && !o.at("event_time").is_null()) {
      out.event_time = o.at("event_time").get<double>();
    }
  }
  return r;
}

json record_to_json(const PatientRecord& r) {
  json timeline = json::array();
  for (const Measurement& m : r.timeline) timeline.push_back(json::array({m.time, m.feature, m.value}));
  json flags = json::array();
  for (bool f : r.statics.comorbidities) flags.push_back(f ? 1 : 0);
  json outcomes = json::object();
  for (Task task : kAllTasks) {
    const Outcome& o = r.outcome(task);
    json entry = {{"label", o.positive ? 1 : 0}};
    if (o.event_time) entry["event_time"] = *o.event_time;
    outcomes[std::string(task_name(task))] = entry;
  }
  // Insertion order is irrelevant: nlohmann::json sorts object keys.
  return json{{"id", r.id},
              {"admit", r.admission},
              {"end", r.end},
              {"static",
               {{"age", r.statics.age},
                {"gender", r.statics.gender},
                {"race", r.statics.race},
                {"comorbidities", flags}}},
              {"timeline", timeline},
              {"outcomes", outcomes}};
}

}  // namespace

Cohort read_cohort(std::istream& in) {
  Cohort cohort;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    PatientRecord record;
    try {
      record = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError("cohort line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("cohort line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      validate_record(record);
    } catch (const ValidationError& e) {
      throw ValidationError("cohort line " + std::to_string(line_no) + ": " + e.what());
    }
    cohort.push_back(std::move(record));
  }
  return cohort;
}

Cohort load_cohort(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cohort file '" + path + "'");
  return read_cohort(in);
}

void write_cohort(std::ostream& out, const Cohort& cohort) {
  for (const PatientRecord& r : cohort) out << record_to_json(r).dump() << '\n';
}

void save_cohort(const std::string& path, const Cohort& cohort) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write cohort file '" + path + "'");
  write_cohort(out, cohort);
  if (!out) throw std::runtime_error("failed writing cohort file '" + path + "'");
}

FeatureSchema FeatureSchema::defaults() {
  FeatureSchema schema;
  schema.names = {"heart_rate",   "respiration_rate", "pulse_oximetry", "systolic_bp",
                  "diastolic_bp", "temperature",      "height",         "weight"};
  for (std::size_t i = 1; i <= kNumLabs; ++i) {
    std::ostringstream name;
    name << "lab_" << std::setw(2) << std::setfill('0') << i;
    schema.names.push_back(name.str());
  }
  return schema;
}

FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("schema '" + path + "': " + e.what());
  }
  FeatureSchema schema = FeatureSchema::defaults();
  for (const auto& [key, value] : j.items()) {
    std::size_t index = 0;
    try {
      index = std::stoul(key);
    } catch (const std::exception&) {
      throw ParseError("schema '" + path + "': key '" + key + "' is not a feature index");
    }
    if (index >= kNumFeatures) throw ParseError("schema '" + path + "': index " + key + " out of range");
    schema.names[index] = value.get<std::string>();
  }
  return schema;
}

void save_schema(const std::string& path, const FeatureSchema& schema) {
  json j = json::object();
  for (std::size_t i = 0; i < schema.names.size(); ++i) j[std::to_string(i)] = schema.names[i];
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write schema file '" + path + "'");
  out << j.dump(2) << '\n';
}

std::size_t count_positives(const Cohort& cohort, Task task) {
  std::size_t n = 0;
  for (const PatientRecord& r : cohort) n += r.outcome(task).positive ? 1 : 0;
  return n;
}

double positive_rate(const Cohort& cohort, Task task) {
  if (cohort.empty()) return 0.0;
  return static_cast<double>(count_positives(cohort, task)) / static_cast<double>(cohort.size());
}

}  // namespace cehr
