#include "cehr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>

#include "cehr/errors.hpp"

namespace cehr {

std::string_view loss_name(LossKind kind) { return kind == LossKind::cl ? "cl" : "cel"; }

LossKind parse_loss(std::string_view name) {
  if (name == "cl") return LossKind::cl;
  if (name == "cel") return LossKind::cel;
  throw ValidationError("unknown loss '" + std::string(name) + "'");
}

namespace {

// Forward passes are shared when a patient appears several times in a batch.
class BatchGraph {
 public:
  BatchGraph(const ModelVars& vars, std::span<const BinnedSequence> fold) : vars_(vars), fold_(fold) {}

  Var fused(std::size_t index) {
    auto it = cache_.find(index);
    if (it != cache_.end()) return it->second;
    Var v = forward_patient(vars_, fold_[index]).fused;
    cache_.emplace(index, v);
    return v;
  }

 private:
  const ModelVars& vars_;
  std::span<const BinnedSequence> fold_;
  std::unordered_map<std::size_t, Var> cache_;
};

}  // namespace

TrainResult train(std::span<const BinnedSequence> fold, EncoderKind encoder, LossKind loss,
                  Task task, const TrainConfig& config, std::uint64_t seed) {
  if (config.batch_size == 0) throw ContractError("train: batch size must be positive");
  TrainResult result;
  result.params = init_model(encoder, config.latent, seed, config.init_scale);
  if (fold.empty() || config.epochs == 0) return result;

  std::vector<int> labels;
  labels.reserve(fold.size());
  for (const BinnedSequence& s : fold) labels.push_back(s.label);
  std::optional<ContrastiveSampler> sampler;
  if (loss == LossKind::cl) sampler.emplace(labels);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(config.adam);
  std::vector<std::size_t> order(fold.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      Tape tape;
      ModelVars vars = bind(tape, result.params);
      BatchGraph graph(vars, fold);
      Var total;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t u = order[k];
        Var term;
        if (loss == LossKind::cl) {
          ContrastiveBatch batch =
              sampler->sample(u, config.same_peers, config.opposite_peers, rng);
          std::vector<Var> same, opposite;
          for (std::size_t j : batch.same) same.push_back(graph.fused(j));
          for (std::size_t j : batch.opposite) opposite.push_back(graph.fused(j));
          const bool positive = batch.label == 1;
          Var connected = embed_event(vars.event, task, positive).second;
          Var other = embed_event(vars.event, task, !positive).second;
          term = cl_loss(graph.fused(u), connected, other, same, opposite, config.weights);
        } else {
          term = cel_loss(graph.fused(u), labels[u], vars.head);
        }
        total = k == start ? term : total + term;
      }
      const double count = static_cast<double>(stop - start);
      Var batch_loss = scale(total, 1.0 / count);
      const double value = batch_loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch_no + 1));
      }
      epoch_total += value * count;
      tape.backward(batch_loss);
      ModelParams grads = gradients(tape, vars);
      adam.step(param_list(result.params), param_list(static_cast<const ModelParams&>(grads)));
    }
    result.loss_trace.push_back(epoch_total / static_cast<double>(fold.size()));
  }
  return result;
}

double predict(const ModelParams& model, LossKind loss, Task task, const BinnedSequence& seq) {
  const Tensor context = represent(model, seq);
  return loss == LossKind::cl ? predict_cl(context, task, model.event)
                              : predict_cel(context, model.head);
}

void write_loss_trace(std::ostream& out, const std::vector<double>& trace) {
  out << "epoch,mean_loss\n";
  const auto old = out.precision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) out << (i + 1) << ',' << trace[i] << '\n';
  out.precision(old);
}

}  // namespace cehr
