#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "cehr/losses.hpp"
#include "cehr/models.hpp"
#include "cehr/optimizer.hpp"

namespace cehr {

enum class LossKind { cl, cel };

std::string_view loss_name(LossKind kind);
LossKind parse_loss(std::string_view name);

struct TrainConfig {
  std::size_t latent = 64;
  std::size_t epochs = 30;
  /// CEL mini-batch size, and the number of anchors whose contrastive losses
  /// are accumulated per optimizer step.
  std::size_t batch_size = 32;
  AdamConfig adam;
  ContrastiveWeights weights;
  std::size_t same_peers = 2;      // m
  std::size_t opposite_peers = 1;  // q
  double init_scale = 1.0;  // Glorot gain
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_trace;  // mean per-patient loss of each epoch
};

/// Trains one model on a preprocessed fold. Anchors are reshuffled and
/// contrastive peers re-drawn every epoch. Deterministic for a given seed.
/// Throws TrainingError naming the epoch and batch if a loss is not finite.
TrainResult train(std::span<const BinnedSequence> fold, EncoderKind encoder, LossKind loss,
                  Task task, const TrainConfig& config, std::uint64_t seed);

/// Predicted probability of the positive outcome with the loss-matched head.
double predict(const ModelParams& model, LossKind loss, Task task, const BinnedSequence& seq);

/// CSV "epoch,mean_loss" with epochs numbered from 1.
void write_loss_trace(std::ostream& out, const std::vector<double>& trace);

}  // namespace cehr
