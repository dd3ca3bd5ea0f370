#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cehr/config.hpp"
#include "cehr/errors.hpp"
#include "cehr/experiment.hpp"

using namespace cehr;
namespace fs = std::filesystem;

namespace {

/// Bad invocation or configuration; exits with status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool dry_run = false;
};

ExperimentConfig resolve(const Options& opt, bool generator_seed) {
  ExperimentConfig config;
  std::map<std::string, std::string> entries;
  if (!opt.config.empty()) {
    try {
      std::ifstream in(opt.config);
      entries = parse_key_values(in);
      apply_entries(config, entries);
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    }
  }
  if (opt.seed) (generator_seed ? config.generator.seed : config.seed) = *opt.seed;
  if (opt.jobs) {
    if (*opt.jobs == 0) throw UsageError("--jobs must be at least 1");
    config.jobs = *opt.jobs;
  } else if (!entries.count("run.jobs")) {
    config.jobs = std::max(1u, std::thread::hardware_concurrency());
  }
  if (!opt.out.empty() && !generator_seed) config.out_dir = opt.out;
  return config;
}

Cohort cohort_for(const ExperimentConfig& config) {
  if (config.generate) return generate_cohort(config.generator);
  if (config.cohort_path.empty()) {
    throw UsageError("no cohort: set cohort.path or cohort.generate = true in the config");
  }
  if (!fs::exists(config.cohort_path)) throw UsageError("cohort file '" + config.cohort_path + "' not found");
  return load_cohort(config.cohort_path);
}

FeatureSchema schema_for(const ExperimentConfig& config) {
  return config.schema_path.empty() ? FeatureSchema::defaults() : load_schema(config.schema_path);
}

int cmd_generate(const Options& opt) {
  const ExperimentConfig config = resolve(opt, true);
  const std::string path = opt.out.empty() ? config.cohort_path : opt.out;
  if (path.empty()) throw UsageError("generate needs --out or cohort.path");
  if (opt.dry_run) {
    write_config(std::cout, config);
    return 0;
  }
  const Cohort cohort = generate_cohort(config.generator);
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  save_cohort(path, cohort);
  std::cerr << "wrote " << cohort.size() << " patients to " << path << '\n';
  return 0;
}

int cmd_run(const Options& opt) {
  const ExperimentConfig config = resolve(opt, false);
  if (opt.dry_run) {
    write_config(std::cout, config);
    return 0;
  }
  const Cohort cohort = cohort_for(config);
  const FeatureSchema schema = schema_for(config);
  const MetricsReport report = run_experiment(config, cohort, [](const CellKey& key, std::size_t fold) {
    std::cerr << key.slug() << " fold " << fold << " done\n";
  });
  write_outputs(config, report, schema);
  for (const CellResult& cell : report.cells) {
    std::cout << cell.key.slug() << " auroc " << cell.auroc().mean << " auprc " << cell.auprc().mean
              << '\n';
  }
  return 0;
}

struct RebuiltFold {
  Checkpoint checkpoint;
  CellKey key;
  std::size_t fold = 0;
  FoldData data;
};

RebuiltFold rebuild(const Options& opt, const ExperimentConfig& config) {
  if (opt.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (!fs::exists(opt.checkpoint)) throw UsageError("checkpoint '" + opt.checkpoint + "' not found");
  RebuiltFold out;
  out.checkpoint = load_checkpoint(opt.checkpoint);
  const auto& meta = out.checkpoint.meta;
  auto field = [&](const std::string& key) {
    const auto it = meta.find(key);
    if (it == meta.end()) throw ParseError("checkpoint has no '" + key + "' entry");
    return it->second;
  };
  out.key.task = parse_task(field("task"));
  out.key.loss = parse_loss(field("loss"));
  out.key.encoder = out.checkpoint.params.encoder;
  out.key.window = std::stoi(field("window"));
  out.key.regime = parse_regime(field("regime"));
  out.fold = std::stoul(field("fold"));
  if (out.fold >= config.folds) throw UsageError("checkpoint fold exceeds experiment.folds");
  const Cohort cohort = regime_cohort(cohort_for(config), out.key.task, out.key.regime, config);
  const FoldAssignment split = split_for(cohort, out.key.task, out.key.regime, config);
  out.data = prepare_fold(cohort, out.key.task, out.key.window, split, out.fold, config);
  return out;
}

fs::path output_dir(const Options& opt) {
  const fs::path dir = opt.out.empty() ? fs::path(".") : fs::path(opt.out);
  fs::create_directories(dir);
  return dir;
}

int cmd_importance(const Options& opt) {
  const ExperimentConfig config = resolve(opt, false);
  if (opt.dry_run) {
    write_config(std::cout, config);
    return 0;
  }
  const RebuiltFold r = rebuild(opt, config);
  if (r.key.encoder != EncoderKind::retain) {
    throw ContractError("unsupported model: importance scores need a RETAIN checkpoint, got " +
                        std::string(encoder_name(r.key.encoder)));
  }
  std::vector<ImportanceMatrix> matrices;
  for (const BinnedSequence& seq : r.data.test) {
    matrices.push_back(patient_importance(r.checkpoint.params, r.key.loss, r.key.task, seq));
  }
  const Heatmap heatmap = aggregate_heatmap(matrices);
  const FeatureSchema schema = schema_for(config);
  const fs::path dir = output_dir(opt);
  const std::string stem = r.key.slug() + "_fold" + std::to_string(r.fold);
  std::ofstream heat(dir / (stem + "_heatmap.csv"));
  write_heatmap_csv(heat, heatmap, schema);
  std::ofstream rank(dir / (stem + "_ranking.csv"));
  write_ranking_csv(rank, heatmap, schema);
  if (!heat || !rank) throw std::runtime_error("cannot write importance output in " + dir.string());
  for (std::size_t i = 0; i < 5 && i < heatmap.ranking.size(); ++i) {
    const FeatureScore& s = heatmap.ranking[i];
    std::cout << (i + 1) << ' ' << schema.name(s.feature) << ' ' << s.score << '\n';
  }
  return 0;
}

int cmd_embed(const Options& opt) {
  const ExperimentConfig config = resolve(opt, false);
  if (opt.dry_run) {
    write_config(std::cout, config);
    return 0;
  }
  const RebuiltFold r = rebuild(opt, config);
  const std::size_t l = latent_dim(r.checkpoint.params);
  FoldResult f;
  f.fold = r.fold;
  f.ids = r.data.test_ids;
  f.embeddings = Tensor::zeros({r.data.test.size(), l});
  for (std::size_t i = 0; i < r.data.test.size(); ++i) {
    const Tensor c = represent(r.checkpoint.params, r.data.test[i]);
    for (std::size_t j = 0; j < l; ++j) f.embeddings.at(i, j) = c[j];
    f.labels.push_back(r.data.test[i].label);
  }
  const fs::path path = output_dir(opt) / (r.key.slug() + "_fold" + std::to_string(r.fold) + "_embeddings.csv");
  export_embeddings(path.string(), f);
  std::cout << path.string() << '\n';
  return 0;
}

void report_error(const std::string& kind, const std::string& message) {
  nlohmann::ordered_json err;
  err["error"] = kind;
  err["message"] = message;
  std::cerr << err.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive EHR representation experiments"};
  app.require_subcommand(1);
  Options opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Key-value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Override the seed");
    sub->add_option("--jobs", opt.jobs, "Worker threads");
    sub->add_option("--out", opt.out, "Output path");
    sub->add_flag("--dry-run", opt.dry_run, "Print the resolved config and exit");
  };
  CLI::App* generate = app.add_subcommand("generate", "Write a synthetic cohort as JSONL");
  CLI::App* run = app.add_subcommand("run", "Cross-validated training and evaluation");
  CLI::App* importance = app.add_subcommand("importance", "Feature-importance heatmap from a checkpoint");
  CLI::App* embed = app.add_subcommand("embed", "Held-out embeddings from a checkpoint");
  for (CLI::App* sub : {generate, run, importance, embed}) common(sub);
  for (CLI::App* sub : {importance, embed}) {
    sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint written by run")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(opt);
    if (run->parsed()) return cmd_run(opt);
    if (importance->parsed()) return cmd_importance(opt);
    return cmd_embed(opt);
  } catch (const UsageError& e) {
    report_error("usage", e.what());
    return 2;
  } catch (const ValidationError& e) {
    report_error("validation", e.what());
  } catch (const ParseError& e) {
    report_error("parse", e.what());
  } catch (const TrainingError& e) {
    report_error("training", e.what());
  } catch (const ContractError& e) {
    report_error("contract", e.what());
  } catch (const std::exception& e) {
    report_error("runtime", e.what());
  }
  return 1;
}
