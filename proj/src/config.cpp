#include "cehr/config.hpp"

#include <charconv>
#include <functional>
#include <type_traits>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cehr/errors.hpp"

namespace cehr {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("config key '" + key + "': invalid number '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ParseError("config key '" + key + "': expected true or false, got '" + text + "'");
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& key, const std::string& text, Parse parse) {
  std::vector<T> out;
  for (const std::string& item : split_list(text)) {
    try {
      out.push_back(parse(item));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError("config key '" + key + "': " + e.what());
    }
  }
  if (out.empty()) throw ParseError("config key '" + key + "': empty list");
  return out;
}

template <class T, class Name>
std::string join(const std::vector<T>& items, Name name) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += name(items[i]);
  }
  return out;
}

std::array<std::optional<double>, 3> parse_rates(const std::string& key, const std::string& text) {
  if (text == "native") return {};
  const auto parts = split_list(text);
  if (parts.size() != 3) throw ParseError("config key '" + key + "': expected three rates or 'native'");
  std::array<std::optional<double>, 3> rates;
  for (std::size_t i = 0; i < 3; ++i) {
    if (parts[i] != "native") rates[i] = parse_number<double>(key, parts[i]);
  }
  return rates;
}

std::string format_rates(const std::array<std::optional<double>, 3>& rates) {
  if (!rates[0] && !rates[1] && !rates[2]) return "native";
  std::string out;
  for (std::size_t i = 0; i < 3; ++i) {
    if (i) out += ',';
    out += rates[i] ? fmt(*rates[i]) : "native";
  }
  return out;
}

std::string_view checkpoint_name(CheckpointPolicy p) {
  switch (p) {
    case CheckpointPolicy::none: return "none";
    case CheckpointPolicy::first: return "first";
    case CheckpointPolicy::all: return "all";
  }
  return "first";
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
};

#define CEHR_NUMBER(member, type)                                                          \
  Field {                                                                                  \
    [](const ExperimentConfig& c) {                                                        \
      if constexpr (std::is_floating_point_v<type>) return fmt(c.member);                  \
      else return std::to_string(c.member);                                                \
    },                                                                                     \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {              \
          c.member = parse_number<type>(k, v);                                             \
        }                                                                                  \
  }

#define CEHR_BOOL(member)                                                                  \
  Field {                                                                                  \
    [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); },    \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {              \
          c.member = parse_bool(k, v);                                                     \
        }                                                                                  \
  }

#define CEHR_STRING(member)                                                                \
  Field {                                                                                  \
    [](const ExperimentConfig& c) { return c.member; },                                    \
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.member = v; } \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"cohort.path", CEHR_STRING(cohort_path)},
      {"cohort.generate", CEHR_BOOL(generate)},
      {"cohort.schema", CEHR_STRING(schema_path)},

      {"generator.n_patients", CEHR_NUMBER(generator.n_patients, std::size_t)},
      {"generator.positive_rates",
       {[](const ExperimentConfig& c) {
          const auto& r = c.generator.positive_rates;
          return fmt(r[0]) + "," + fmt(r[1]) + "," + fmt(r[2]);
        },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          const auto parts = split_list(v);
          if (parts.size() != 3) throw ParseError("config key '" + k + "': expected three rates");
          for (std::size_t i = 0; i < 3; ++i) c.generator.positive_rates[i] = parse_number<double>(k, parts[i]);
        }}},
      {"generator.signal_features",
       {[](const ExperimentConfig& c) {
          return join(c.generator.signal_features, [](const SignalFeature& s) {
            return std::to_string(s.feature) + ":" + fmt(s.effect);
          });
        },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.generator.signal_features.clear();
          if (v == "none") return;
          for (const std::string& item : split_list(v)) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ParseError("config key '" + k + "': expected feature:effect");
            c.generator.signal_features.push_back(
                {parse_number<std::size_t>(k, trim(item.substr(0, colon))),
                 parse_number<double>(k, trim(item.substr(colon + 1)))});
          }
        }}},
      {"generator.noise_std", CEHR_NUMBER(generator.noise_std, double)},
      {"generator.missingness_rate", CEHR_NUMBER(generator.missingness_rate, double)},
      {"generator.feature_missingness",
       {[](const ExperimentConfig& c) {
          if (c.generator.feature_missingness.empty()) return std::string("none");
          std::string out;
          for (const auto& [f, rate] : c.generator.feature_missingness) {
            if (!out.empty()) out += ',';
            out += std::to_string(f) + ":" + fmt(rate);
          }
          return out;
        },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.generator.feature_missingness.clear();
          if (v == "none") return;
          for (const std::string& item : split_list(v)) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ParseError("config key '" + k + "': expected feature:rate");
            c.generator.feature_missingness[parse_number<std::size_t>(k, trim(item.substr(0, colon)))] =
                parse_number<double>(k, trim(item.substr(colon + 1)));
          }
        }}},
      {"generator.severity_gain", CEHR_NUMBER(generator.severity_gain, double)},
      {"generator.static_effect", CEHR_NUMBER(generator.static_effect, double)},
      {"generator.stay_log_mean", CEHR_NUMBER(generator.stay_log_mean, double)},
      {"generator.stay_log_std", CEHR_NUMBER(generator.stay_log_std, double)},
      {"generator.min_stay_hours", CEHR_NUMBER(generator.min_stay_hours, double)},
      {"generator.vital_interval_hours", CEHR_NUMBER(generator.vital_interval_hours, double)},
      {"generator.lab_interval_hours", CEHR_NUMBER(generator.lab_interval_hours, double)},
      {"generator.seed", CEHR_NUMBER(generator.seed, std::uint64_t)},

      {"experiment.tasks",
       {[](const ExperimentConfig& c) { return join(c.tasks, [](Task t) { return std::string(task_name(t)); }); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.tasks = parse_list<Task>(k, v, [](const std::string& s) { return parse_task(s); });
        }}},
      {"experiment.encoders",
       {[](const ExperimentConfig& c) {
          return join(c.encoders, [](EncoderKind e) { return std::string(encoder_name(e)); });
        },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.encoders = parse_list<EncoderKind>(k, v, [](const std::string& s) { return parse_encoder(s); });
        }}},
      {"experiment.losses",
       {[](const ExperimentConfig& c) { return join(c.losses, [](LossKind l) { return std::string(loss_name(l)); }); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.losses = parse_list<LossKind>(k, v, [](const std::string& s) { return parse_loss(s); });
        }}},
      {"experiment.windows",
       {[](const ExperimentConfig& c) { return join(c.windows, [](int w) { return std::to_string(w); }); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.windows = parse_list<int>(k, v, [&](const std::string& s) {
            const int w = parse_number<int>(k, s);
            if (w <= 0 || w % static_cast<int>(kBinHours) != 0) {
              throw ParseError("config key '" + k + "': window " + s + " is not a positive multiple of " +
                               std::to_string(static_cast<int>(kBinHours)));
            }
            return w;
          });
        }}},
      {"experiment.regimes",
       {[](const ExperimentConfig& c) {
          return join(c.regimes, [](Regime r) { return std::string(regime_name(r)); });
        },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.regimes = parse_list<Regime>(k, v, [](const std::string& s) { return parse_regime(s); });
        }}},
      {"experiment.folds", CEHR_NUMBER(folds, std::size_t)},
      {"experiment.seed", CEHR_NUMBER(seed, std::uint64_t)},
      {"regime.full.rates",
       {[](const ExperimentConfig& c) { return format_rates(c.full_rates); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.full_rates = parse_rates(k, v); }}},
      {"regime.restricted.rates",
       {[](const ExperimentConfig& c) { return format_rates(c.restricted_rates); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.restricted_rates = parse_rates(k, v);
        }}},

      {"preprocess.clip_low", CEHR_NUMBER(clip_low, double)},
      {"preprocess.clip_high", CEHR_NUMBER(clip_high, double)},

      {"model.latent", CEHR_NUMBER(train.latent, std::size_t)},
      {"train.epochs", CEHR_NUMBER(train.epochs, std::size_t)},
      {"train.batch_size", CEHR_NUMBER(train.batch_size, std::size_t)},
      {"train.learning_rate", CEHR_NUMBER(train.adam.learning_rate, double)},
      {"train.beta1", CEHR_NUMBER(train.adam.beta1, double)},
      {"train.beta2", CEHR_NUMBER(train.adam.beta2, double)},
      {"train.epsilon", CEHR_NUMBER(train.adam.epsilon, double)},
      {"train.init_scale", CEHR_NUMBER(train.init_scale, double)},
      {"loss.a", CEHR_NUMBER(train.weights.label, double)},
      {"loss.b", CEHR_NUMBER(train.weights.peer, double)},
      {"loss.m", CEHR_NUMBER(train.same_peers, std::size_t)},
      {"loss.q", CEHR_NUMBER(train.opposite_peers, std::size_t)},

      {"output.dir", CEHR_STRING(out_dir)},
      {"output.embeddings", CEHR_BOOL(export_embeddings)},
      {"output.heatmaps", CEHR_BOOL(export_heatmaps)},
      {"output.curves", CEHR_BOOL(export_curves)},
      {"output.loss_traces", CEHR_BOOL(export_loss_traces)},
      {"output.checkpoints",
       {[](const ExperimentConfig& c) { return std::string(checkpoint_name(c.checkpoints)); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "none") c.checkpoints = CheckpointPolicy::none;
          else if (v == "first") c.checkpoints = CheckpointPolicy::first;
          else if (v == "all") c.checkpoints = CheckpointPolicy::all;
          else throw ParseError("config key '" + k + "': expected none, first or all");
        }}},
      {"run.jobs", CEHR_NUMBER(jobs, std::size_t)},
  };
  return table;
}

#undef CEHR_NUMBER
#undef CEHR_BOOL
#undef CEHR_STRING

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ParseError("config: " + msg); };
  if (c.folds < 2) fail("experiment.folds must be at least 2");
  if (c.jobs < 1) fail("run.jobs must be at least 1");
  if (c.train.latent < 1) fail("model.latent must be positive");
  if (c.train.epochs < 1) fail("train.epochs must be positive");
  if (c.train.batch_size < 1) fail("train.batch_size must be positive");
  if (!(c.train.adam.learning_rate > 0)) fail("train.learning_rate must be positive");
  if (!(c.clip_low >= 0 && c.clip_low < c.clip_high && c.clip_high <= 100)) {
    fail("preprocess.clip_low/clip_high must satisfy 0 <= low < high <= 100");
  }
  for (const auto* rates : {&c.full_rates, &c.restricted_rates}) {
    for (const auto& r : *rates) {
      if (r && !(*r > 0 && *r < 1)) fail("regime rates must lie in (0, 1)");
    }
  }
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> entries;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ParseError("config line " + std::to_string(number) + ": empty key");
    if (!fields().count(key)) {
      throw ParseError("config line " + std::to_string(number) + ": unknown key '" + key + "'");
    }
    if (entries.count(key)) {
      throw ParseError("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
    }
    entries[key] = value;
  }
  return entries;
}

void apply_entries(ExperimentConfig& config, const std::map<std::string, std::string>& entries) {
  for (const auto& [key, value] : entries) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ParseError("unknown config key '" + key + "'");
    try {
      it->second.set(config, key, value);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError("config key '" + key + "': " + e.what());
    }
  }
  validate(config);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  ExperimentConfig config;
  apply_entries(config, parse_key_values(in));
  return config;
}

std::map<std::string, std::string> config_entries(const ExperimentConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) out[key] = field.get(config);
  return out;
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  for (const auto& [key, value] : config_entries(config)) out << key << " = " << value << '\n';
}

}  // namespace cehr
