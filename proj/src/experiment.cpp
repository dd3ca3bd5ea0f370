#include "cehr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cehr/config.hpp"
#include "cehr/errors.hpp"

namespace cehr {

namespace fs = std::filesystem;

std::string_view regime_name(Regime regime) {
  return regime == Regime::full ? "full" : "restricted";
}

Regime parse_regime(std::string_view name) {
  if (name == "full") return Regime::full;
  if (name == "restricted") return Regime::restricted;
  throw ValidationError("unknown regime '" + std::string(name) + "'");
}

std::string CellKey::slug() const {
  std::ostringstream s;
  s << task_name(task) << '_' << encoder_name(encoder) << '_' << loss_name(loss) << '_' << window
    << "h_" << regime_name(regime);
  return s.str();
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix(base);
  for (std::uint64_t p : parts) h = splitmix(h ^ p);
  return h;
}

enum SeedTag : std::uint64_t { kRestrict = 1, kSplit = 2, kEndpoint = 3 };

std::vector<int> labels_of(const Cohort& cohort, Task task) {
  std::vector<int> labels;
  labels.reserve(cohort.size());
  for (const PatientRecord& r : cohort) labels.push_back(r.label(task));
  return labels;
}

}  // namespace

Cohort regime_cohort(const Cohort& cohort, Task task, Regime regime, const ExperimentConfig& config) {
  const auto& rates = regime == Regime::full ? config.full_rates : config.restricted_rates;
  const std::optional<double> target = rates[static_cast<std::size_t>(task)];
  if (!target) return cohort;
  std::mt19937_64 rng(derive_seed(config.seed, {kRestrict, static_cast<std::uint64_t>(task),
                                                static_cast<std::uint64_t>(regime)}));
  return restrict_positives(cohort, task, *target, rng);
}

FoldAssignment split_for(const Cohort& cohort, Task task, Regime regime, const ExperimentConfig& config) {
  std::mt19937_64 rng(derive_seed(config.seed, {kSplit, static_cast<std::uint64_t>(task),
                                                static_cast<std::uint64_t>(regime)}));
  const std::vector<int> labels = labels_of(cohort, task);
  return kfold_split(labels, config.folds, rng);
}

std::uint64_t fold_seed(const ExperimentConfig& config, std::size_t fold) {
  return config.seed + fold;
}

FoldData prepare_fold(const Cohort& cohort, Task task, int window, const FoldAssignment& folds,
                      std::size_t fold, const ExperimentConfig& config) {
  if (folds.fold.size() != cohort.size()) {
    throw ContractError("prepare_fold: fold assignment does not match the cohort");
  }
  Cohort train_raw, test_raw;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    (folds.fold[i] == fold ? test_raw : train_raw).push_back(cohort[i]);
  }
  FoldData data;
  data.preprocessor = Preprocessor::fit(train_raw, config.clip_low, config.clip_high);
  data.endpoints = estimate_endpoint_stats(train_raw, task);
  const Cohort train = data.preprocessor.transform(train_raw);
  const Cohort test = data.preprocessor.transform(test_raw);

  std::mt19937_64 rng(derive_seed(config.seed, {kEndpoint, static_cast<std::uint64_t>(task),
                                                static_cast<std::uint64_t>(window), fold}));
  const double hours = static_cast<double>(window);
  auto bin = [&](const PatientRecord& r) {
    const Outcome& o = r.outcome(task);
    const double endpoint =
        o.positive ? *o.event_time : sample_negative_endpoint(data.endpoints, r, hours, rng).time;
    return bin_timeline(r, hours, endpoint, task);
  };
  data.train.reserve(train.size());
  for (const PatientRecord& r : train) data.train.push_back(bin(r));
  data.test.reserve(test.size());
  for (const PatientRecord& r : test) {
    data.test.push_back(bin(r));
    data.test_ids.push_back(r.id);
  }
  return data;
}

namespace {

FoldResult evaluate_fold(const FoldData& data, const CellKey& key, std::size_t fold,
                         const ExperimentConfig& config) {
  TrainResult trained = train(data.train, key.encoder, key.loss, key.task, config.train,
                              fold_seed(config, fold));
  FoldResult out;
  out.fold = fold;
  out.ids = data.test_ids;
  out.loss_trace = std::move(trained.loss_trace);
  const std::size_t n = data.test.size();
  const std::size_t l = latent_dim(trained.params);
  out.embeddings = Tensor::zeros({std::max<std::size_t>(n, 1), l});
  std::vector<ImportanceMatrix> importance;
  for (std::size_t i = 0; i < n; ++i) {
    const BinnedSequence& seq = data.test[i];
    const Tensor context = represent(trained.params, seq);
    for (std::size_t j = 0; j < l; ++j) out.embeddings.at(i, j) = context[j];
    out.labels.push_back(seq.label);
    out.scores.push_back(key.loss == LossKind::cl ? predict_cl(context, key.task, trained.params.event)
                                                  : predict_cel(context, trained.params.head));
    if (key.encoder == EncoderKind::retain && config.export_heatmaps) {
      importance.push_back(patient_importance(trained.params, key.loss, key.task, seq));
    }
  }
  if (n == 0) out.embeddings = Tensor::zeros({1, l});

  auto guarded = [&](const char* name, auto&& fn, std::optional<double>& slot) {
    try {
      slot = fn();
    } catch (const UndefinedMetricError& e) {
      out.undefined.push_back(std::string(name) + ": " + e.what());
    }
  };
  guarded("auroc", [&] { return auroc(out.scores, out.labels); }, out.auroc);
  guarded("auprc", [&] { return auprc(out.scores, out.labels); }, out.auprc);
  guarded("silhouette", [&] { return silhouette(out.embeddings, out.labels); }, out.silhouette);
  if (!importance.empty()) out.heatmap = aggregate_heatmap(importance);

  const bool keep = config.checkpoints == CheckpointPolicy::all ||
                    (config.checkpoints == CheckpointPolicy::first && fold == 0);
  if (keep) out.model = std::move(trained.params);
  return out;
}

struct WorkUnit {
  Task task;
  Regime regime;
  int window;
  std::size_t fold;
  const Cohort* cohort;
  const FoldAssignment* split;
  std::vector<std::size_t> cells;  // indices into the report, one per encoder x loss
};

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& config, const Cohort& cohort,
                             const ProgressFn& progress) {
  struct TaskRegime {
    Task task;
    Regime regime;
    Cohort cohort;
    FoldAssignment split;
  };
  std::vector<TaskRegime> prepared;
  for (Task task : config.tasks) {
    for (Regime regime : config.regimes) {
      Cohort c = regime_cohort(cohort, task, regime, config);
      FoldAssignment split = split_for(c, task, regime, config);
      prepared.push_back({task, regime, std::move(c), std::move(split)});
    }
  }

  MetricsReport report;
  std::vector<WorkUnit> units;
  for (const TaskRegime& tr : prepared) {
    for (int window : config.windows) {
      std::vector<std::size_t> cells;
      for (EncoderKind encoder : config.encoders) {
        for (LossKind loss : config.losses) {
          CellResult cell;
          cell.key = {tr.task, encoder, loss, window, tr.regime};
          cell.patients = tr.cohort.size();
          cell.positive_rate = positive_rate(tr.cohort, tr.task);
          cell.folds.resize(config.folds);
          cells.push_back(report.cells.size());
          report.cells.push_back(std::move(cell));
        }
      }
      for (std::size_t f = 0; f < config.folds; ++f) {
        units.push_back({tr.task, tr.regime, window, f, &tr.cohort, &tr.split, cells});
      }
    }
  }

  std::vector<std::exception_ptr> failures(units.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t u = next++; u < units.size(); u = next++) {
      const WorkUnit& unit = units[u];
      try {
        const FoldData data =
            prepare_fold(*unit.cohort, unit.task, unit.window, *unit.split, unit.fold, config);
        for (std::size_t c : unit.cells) {
          CellResult& cell = report.cells[c];
          cell.folds[unit.fold] = evaluate_fold(data, cell.key, unit.fold, config);
          if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(cell.key, unit.fold);
          }
        }
      } catch (...) {
        failures[u] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(config.jobs, units.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (std::size_t u = 0; u < units.size(); ++u) {
    if (!failures[u]) continue;
    std::ostringstream where;
    where << "fold " << units[u].fold << " of " << task_name(units[u].task) << ' '
          << units[u].window << "h " << regime_name(units[u].regime);
    try {
      std::rethrow_exception(failures[u]);
    } catch (const std::exception& e) {
      throw TrainingError(where.str() + " failed: " + e.what());
    }
  }
  return report;
}

namespace {

template <class Get>
Summary summarize_folds(const std::vector<FoldResult>& folds, Get get) {
  std::vector<double> values;
  for (const FoldResult& f : folds) {
    if (const std::optional<double> v = get(f)) values.push_back(*v);
  }
  return summarize(values);
}

}  // namespace

Summary CellResult::auroc() const {
  return summarize_folds(folds, [](const FoldResult& f) { return f.auroc; });
}
Summary CellResult::auprc() const {
  return summarize_folds(folds, [](const FoldResult& f) { return f.auprc; });
}
Summary CellResult::silhouette() const {
  return summarize_folds(folds, [](const FoldResult& f) { return f.silhouette; });
}

const CellResult* MetricsReport::find(const CellKey& key) const {
  for (const CellResult& c : cells) {
    if (c.key.task == key.task && c.key.encoder == key.encoder && c.key.loss == key.loss &&
        c.key.window == key.window && c.key.regime == key.regime) {
      return &c;
    }
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Exports

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.precision(17);
  return out;
}

}  // namespace

void export_embeddings(const std::string& path, const FoldResult& fold) {
  std::ofstream out = open_out(path);
  const std::size_t l = fold.embeddings.cols();
  out << "patient_id,label";
  for (std::size_t j = 0; j < l; ++j) out << ",c" << j;
  out << '\n';
  for (std::size_t i = 0; i < fold.ids.size(); ++i) {
    out << fold.ids[i] << ',' << fold.labels[i];
    for (std::size_t j = 0; j < l; ++j) out << ',' << fold.embeddings.at(i, j);
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

EmbeddingTable read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings '" + path + "'");
  std::string line;
  std::getline(in, line);
  EmbeddingTable table;
  std::vector<double> values;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    table.ids.push_back(cell);
    std::getline(row, cell, ',');
    table.labels.push_back(std::stoi(cell));
    std::size_t count = 0;
    while (std::getline(row, cell, ',')) {
      values.push_back(std::stod(cell));
      ++count;
    }
    if (width == 0) width = count;
    if (count != width || count == 0) throw ParseError("embeddings '" + path + "': ragged row");
  }
  if (!table.ids.empty()) table.values = Tensor::matrix(table.ids.size(), width, std::move(values));
  return table;
}

std::string report_json(const ExperimentConfig& config, const MetricsReport& report) {
  using ojson = nlohmann::ordered_json;
  ojson doc;
  ojson cfg = ojson::object();
  // Output location and thread count are left out.
  for (const auto& [k, v] : config_entries(config)) {
    if (k != "output.dir" && k != "run.jobs") cfg[k] = v;
  }
  doc["config"] = cfg;
  ojson cells = ojson::array();
  for (const CellResult& cell : report.cells) {
    auto metric = [&](auto get, Summary summary) {
      ojson folds = ojson::array();
      for (const FoldResult& f : cell.folds) {
        const std::optional<double> v = get(f);
        folds.push_back(v ? ojson(*v) : ojson(nullptr));
      }
      return ojson{{"mean", summary.mean}, {"std", summary.std}, {"folds", folds}};
    };
    ojson undefined = ojson::array();
    for (const FoldResult& f : cell.folds) {
      for (const std::string& reason : f.undefined) undefined.push_back({{"fold", f.fold}, {"reason", reason}});
    }
    cells.push_back({{"task", task_name(cell.key.task)},
                     {"encoder", encoder_name(cell.key.encoder)},
                     {"loss", loss_name(cell.key.loss)},
                     {"window", cell.key.window},
                     {"regime", regime_name(cell.key.regime)},
                     {"patients", cell.patients},
                     {"positive_rate", cell.positive_rate},
                     {"auroc", metric([](const FoldResult& f) { return f.auroc; }, cell.auroc())},
                     {"auprc", metric([](const FoldResult& f) { return f.auprc; }, cell.auprc())},
                     {"silhouette",
                      metric([](const FoldResult& f) { return f.silhouette; }, cell.silhouette())},
                     {"undefined", undefined}});
  }
  doc["cells"] = cells;
  return doc.dump(2) + "\n";
}

void write_outputs(const ExperimentConfig& config, const MetricsReport& report,
                   const FeatureSchema& schema) {
  const fs::path root(config.out_dir);
  fs::create_directories(root);
  {
    std::ofstream out = open_out(root / "config.resolved.txt");
    write_config(out, config);
  }
  {
    std::ofstream out = open_out(root / "report.json");
    out << report_json(config, report);
  }
  if (config.export_curves) {
    std::ofstream out = open_out(root / "curves.csv");
    out << "task,encoder,loss,window,regime,fold,threshold,fpr,tpr,precision,recall\n";
    for (const CellResult& cell : report.cells) {
      for (const FoldResult& f : cell.folds) {
        for (const CurvePoint& p : threshold_sweep(f.scores, f.labels)) {
          out << task_name(cell.key.task) << ',' << encoder_name(cell.key.encoder) << ','
              << loss_name(cell.key.loss) << ',' << cell.key.window << ','
              << regime_name(cell.key.regime) << ',' << f.fold << ',';
          if (std::isinf(p.threshold)) {
            out << "inf";
          } else {
            out << p.threshold;
          }
          out << ',' << p.fpr << ',' << p.tpr << ',' << p.precision << ',' << p.recall << '\n';
        }
      }
    }
  }
  for (const CellResult& cell : report.cells) {
    const std::string slug = cell.key.slug();
    for (const FoldResult& f : cell.folds) {
      const std::string stem = slug + "_fold" + std::to_string(f.fold);
      if (config.export_embeddings) {
        fs::create_directories(root / "embeddings");
        export_embeddings((root / "embeddings" / (stem + ".csv")).string(), f);
      }
      if (config.export_heatmaps && f.heatmap) {
        fs::create_directories(root / "heatmaps");
        std::ofstream heat = open_out(root / "heatmaps" / (stem + ".csv"));
        write_heatmap_csv(heat, *f.heatmap, schema);
        std::ofstream rank = open_out(root / "heatmaps" / (stem + "_ranking.csv"));
        write_ranking_csv(rank, *f.heatmap, schema);
      }
      if (config.export_loss_traces) {
        fs::create_directories(root / "loss");
        std::ofstream trace = open_out(root / "loss" / (stem + ".csv"));
        write_loss_trace(trace, f.loss_trace);
      }
      if (f.model) {
        fs::create_directories(root / "checkpoints");
        Checkpoint cp{*f.model,
                      {{"task", std::string(task_name(cell.key.task))},
                       {"loss", std::string(loss_name(cell.key.loss))},
                       {"window", std::to_string(cell.key.window)},
                       {"regime", std::string(regime_name(cell.key.regime))},
                       {"fold", std::to_string(f.fold)}}};
        save_checkpoint((root / "checkpoints" / (stem + ".json")).string(), cp);
      }
    }
  }
}

}  // namespace cehr
