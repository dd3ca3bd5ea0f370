#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cehr/autodiff.hpp"
#include "cehr/cohort.hpp"
#include "cehr/preprocess.hpp"
#include "cehr/tensor.hpp"

namespace cehr {

enum class EncoderKind { rnn, retain };

std::string_view encoder_name(EncoderKind kind);
EncoderKind parse_encoder(std::string_view name);

// Parameter layouts are templated on the slot type so one definition serves
// values (Tensor), tape handles (Var), gradients and optimizer moments.

/// Elman cell: h' = tanh(input * x + recurrent * h + bias).
template <class T>
struct RecurrenceT {
  T input;      // l x in
  T recurrent;  // l x l
  T bias;       // l
};

template <class T>
struct RetainT {
  T embed;  // W_p, l x 63; v_i = W_p x_i
  RecurrenceT<T> alpha_rnn;
  T alpha_proj;  // l
  T alpha_bias;  // 1
  RecurrenceT<T> beta_rnn;
  T beta_proj;  // l x l
  T beta_bias;  // l
};

/// Outcome-node embedding: C_e = tanh(weight * one_hot(label) + bias) - relation[task].
template <class T>
struct EventT {
  T weight;    // l x 2, column 0 = positive event, column 1 = negative
  T bias;      // l
  T relation;  // 3 x l, one translation vector per task
};

/// fused = tanh(weight * [C_p ; statics] + bias).
template <class T>
struct FusionT {
  T weight;  // l x (l + 20)
  T bias;    // l
};

/// Cross-entropy head; row 0 scores the positive class.
template <class T>
struct HeadT {
  T weight;  // 2 x l
  T bias;    // 2
};

template <class T>
struct ModelT {
  EncoderKind encoder = EncoderKind::retain;
  std::optional<RecurrenceT<T>> rnn;
  std::optional<RetainT<T>> retain;
  EventT<T> event;
  FusionT<T> fusion;
  HeadT<T> head;
};

using RnnParams = RecurrenceT<Tensor>;
using RetainParams = RetainT<Tensor>;
using EventParams = EventT<Tensor>;
using FusionParams = FusionT<Tensor>;
using CelHead = HeadT<Tensor>;
using ModelParams = ModelT<Tensor>;
using ModelVars = ModelT<Var>;

namespace detail {

template <class F, class... R>
void visit_recurrence(F& f, const std::string& prefix, R&... r) {
  f(prefix + ".input", r.input...);
  f(prefix + ".recurrent", r.recurrent...);
  f(prefix + ".bias", r.bias...);
}

template <class F, class... R>
void visit_retain(F& f, R&... r) {
  f(std::string("retain.embed"), r.embed...);
  visit_recurrence(f, "retain.alpha_rnn", r.alpha_rnn...);
  f(std::string("retain.alpha_proj"), r.alpha_proj...);
  f(std::string("retain.alpha_bias"), r.alpha_bias...);
  visit_recurrence(f, "retain.beta_rnn", r.beta_rnn...);
  f(std::string("retain.beta_proj"), r.beta_proj...);
  f(std::string("retain.beta_bias"), r.beta_bias...);
}

}  // namespace detail

/// Calls f(name, slot_0, slot_1, ...) for every parameter, walking several
/// same-encoder models in lockstep. Order is fixed and defines the flat
/// parameter order used by the optimizer and checkpoints.
template <class F, class M0, class... M>
void visit_params(F&& f, M0& m0, M&... m) {
  if (m0.rnn) detail::visit_recurrence(f, "rnn", *m0.rnn, *m.rnn...);
  if (m0.retain) detail::visit_retain(f, *m0.retain, *m.retain...);
  f(std::string("event.weight"), m0.event.weight, m.event.weight...);
  f(std::string("event.bias"), m0.event.bias, m.event.bias...);
  f(std::string("event.relation"), m0.event.relation, m.event.relation...);
  f(std::string("fusion.weight"), m0.fusion.weight, m.fusion.weight...);
  f(std::string("fusion.bias"), m0.fusion.bias, m.fusion.bias...);
  f(std::string("head.weight"), m0.head.weight, m.head.weight...);
  f(std::string("head.bias"), m0.head.bias, m.head.bias...);
}

/// Model with every slot default-constructed but the encoder engaged.
template <class U, class T>
ModelT<U> same_layout(const ModelT<T>& model) {
  ModelT<U> out;
  out.encoder = model.encoder;
  if (model.rnn) out.rnn.emplace();
  if (model.retain) out.retain.emplace();
  return out;
}

/// Glorot-uniform weights times `gain` and zero biases, drawn from a
/// generator seeded with `seed`.
ModelParams init_model(EncoderKind encoder, std::size_t latent, std::uint64_t seed,
                       double gain = 1.0);
/// Same shapes as `model`, every entry zero.
ModelParams zeros_like(const ModelParams& model);
std::size_t latent_dim(const ModelParams& model);

std::vector<Tensor*> param_list(ModelParams& model);
std::vector<const Tensor*> param_list(const ModelParams& model);

/// Records every parameter as a trainable leaf.
ModelVars bind(Tape& tape, const ModelParams& model);
/// Records every parameter as a constant (inference only).
ModelVars bind_constant(Tape& tape, const ModelParams& model);
/// Gradients gathered after tape.backward(); unreached parameters are zero.
ModelParams gradients(const Tape& tape, const ModelVars& vars);

// ---------------------------------------------------------------------------
// Tape-level forward passes

struct RetainTrace {
  Var context;                // C_p = sum_i alpha_i (beta_i * v_i), before fusion
  std::vector<Var> alpha;     // n scalars
  std::vector<Var> beta;      // n vectors of length l
};

/// One constant per time step (rows of `steps`).
std::vector<Var> step_inputs(Tape& tape, const Tensor& steps);

Var encode_rnn(const RecurrenceT<Var>& params, const std::vector<Var>& steps);
RetainTrace encode_retain(const RetainT<Var>& params, const std::vector<Var>& steps);
/// Returns (C_e_hat, C_e).
std::pair<Var, Var> embed_event(const EventT<Var>& params, Task task, bool positive);
Var fuse_static(const FusionT<Var>& params, Var context, Var statics);

struct PatientForward {
  Var sequence;  // encoder output before static fusion
  Var fused;     // the C_p every loss and predictor consumes
  std::vector<Var> alpha;  // RETAIN only
  std::vector<Var> beta;   // RETAIN only
};

PatientForward forward_patient(const ModelVars& vars, const BinnedSequence& seq);

// ---------------------------------------------------------------------------
// Value-level conveniences

struct RetainOutput {
  Tensor context;
  std::vector<double> alpha;
  Tensor beta;  // n x l
};

Tensor encode_rnn(const BinnedSequence& seq, const RnnParams& params);
RetainOutput encode_retain(const BinnedSequence& seq, const RetainParams& params);
std::pair<Tensor, Tensor> embed_event(Task task, bool positive, const EventParams& params);
Tensor fuse_static(const Tensor& context, const StaticVector& statics, const FusionParams& params);
/// Fused patient representation.
Tensor represent(const ModelParams& model, const BinnedSequence& seq);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  std::map<std::string, std::string> meta;
};

/// JSON: {"format": "cehr-checkpoint", "version": 1, "encoder", "latent",
/// "meta": {...}, "tensors": [{"name", "shape", "values"}, ...]}.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cehr
