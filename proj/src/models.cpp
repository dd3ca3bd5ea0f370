#include "cehr/models.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "cehr/errors.hpp"

namespace cehr {

std::string_view encoder_name(EncoderKind kind) {
  return kind == EncoderKind::rnn ? "rnn" : "retain";
}

EncoderKind parse_encoder(std::string_view name) {
  if (name == "rnn") return EncoderKind::rnn;
  if (name == "retain") return EncoderKind::retain;
  throw ValidationError("unknown encoder '" + std::string(name) + "'");
}

namespace {

// Glorot-uniform weights, zero biases.
Tensor glorot(std::size_t rows, std::size_t cols, double gain, std::mt19937_64& rng) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
  return Tensor::uniform({rows, cols}, -bound, bound, rng);
}

RecurrenceT<Tensor> init_recurrence(std::size_t in, std::size_t l, double gain, std::mt19937_64& rng) {
  Tensor input = glorot(l, in, gain, rng);
  Tensor recurrent = glorot(l, l, gain, rng);
  return {std::move(input), std::move(recurrent), Tensor::zeros({l})};
}

}  // namespace

ModelParams init_model(EncoderKind encoder, std::size_t latent, std::uint64_t seed, double scale) {
  if (latent == 0) throw ContractError("init_model: latent dimension must be at least 1");
  std::mt19937_64 rng(seed);
  const std::size_t l = latent;
  ModelParams m;
  m.encoder = encoder;
  if (encoder == EncoderKind::rnn) {
    m.rnn = init_recurrence(kNumFeatures, l, scale, rng);
  } else {
    RetainParams r;
    r.embed = glorot(l, kNumFeatures, scale, rng);
    r.alpha_rnn = init_recurrence(l, l, scale, rng);
    const double bound = scale * std::sqrt(6.0 / static_cast<double>(l + 1));
    r.alpha_proj = Tensor::uniform({l}, -bound, bound, rng);
    r.alpha_bias = Tensor::zeros({1});
    r.beta_rnn = init_recurrence(l, l, scale, rng);
    r.beta_proj = glorot(l, l, scale, rng);
    r.beta_bias = Tensor::zeros({l});
    m.retain = std::move(r);
  }
  m.event.weight = glorot(l, 2, scale, rng);
  m.event.bias = Tensor::zeros({l});
  m.event.relation = glorot(3, l, scale, rng);
  m.fusion.weight = glorot(l, l + kStaticDim, scale, rng);
  m.fusion.bias = Tensor::zeros({l});
  m.head.weight = glorot(2, l, scale, rng);
  m.head.bias = Tensor::zeros({2});
  return m;
}

ModelParams zeros_like(const ModelParams& model) {
  ModelParams out = same_layout<Tensor>(model);
  visit_params([](const std::string&, const Tensor& src, Tensor& dst) { dst = Tensor::zeros(src.shape()); },
               model, out);
  return out;
}

std::size_t latent_dim(const ModelParams& model) { return model.event.bias.size(); }

std::vector<Tensor*> param_list(ModelParams& model) {
  std::vector<Tensor*> out;
  visit_params([&](const std::string&, Tensor& t) { out.push_back(&t); }, model);
  return out;
}

std::vector<const Tensor*> param_list(const ModelParams& model) {
  std::vector<const Tensor*> out;
  visit_params([&](const std::string&, const Tensor& t) { out.push_back(&t); }, model);
  return out;
}

ModelVars bind(Tape& tape, const ModelParams& model) {
  ModelVars vars = same_layout<Var>(model);
  visit_params([&](const std::string&, const Tensor& t, Var& v) { v = tape.leaf(t); }, model, vars);
  return vars;
}

ModelVars bind_constant(Tape& tape, const ModelParams& model) {
  ModelVars vars = same_layout<Var>(model);
  visit_params([&](const std::string&, const Tensor& t, Var& v) { v = tape.constant(t); }, model,
               vars);
  return vars;
}

ModelParams gradients(const Tape& tape, const ModelVars& vars) {
  ModelParams out = same_layout<Tensor>(vars);
  visit_params([&](const std::string&, const Var& v, Tensor& g) { g = tape.grad(v); }, vars, out);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Var> step_inputs(Tape& tape, const Tensor& steps) {
  if (steps.rank() != 2 || steps.cols() != kNumFeatures) {
    throw ShapeError("sequence must be n x 63, got " + shape_string(steps.shape()));
  }
  std::vector<Var> out;
  out.reserve(steps.rows());
  for (std::size_t i = 0; i < steps.rows(); ++i) out.push_back(tape.constant(Tensor::vector(steps.row(i))));
  return out;
}

namespace {

Var zeros_state(Tape& tape, Var bias) { return tape.constant(Tensor::zeros(bias.shape())); }

void check_input_width(const std::vector<Var>& steps, Var weight) {
  if (steps.empty()) throw ShapeError("sequence must have at least one step");
  for (const Var& x : steps) {
    if (x.size() != weight.value().cols()) {
      throw ShapeError("step width " + shape_string(x.shape()) + " does not match input weight " +
                       shape_string(weight.shape()));
    }
  }
}

}  // namespace

Var encode_rnn(const RecurrenceT<Var>& p, const std::vector<Var>& steps) {
  check_input_width(steps, p.input);
  Var h = zeros_state(*p.bias.tape, p.bias);
  for (const Var& x : steps) h = tanh(matvec(p.input, x) + matvec(p.recurrent, h) + p.bias);
  return h;
}

RetainTrace encode_retain(const RetainT<Var>& p, const std::vector<Var>& steps) {
  check_input_width(steps, p.embed);
  Tape& tape = *p.embed.tape;
  const std::size_t n = steps.size();

  std::vector<Var> v;
  v.reserve(n);
  for (const Var& x : steps) v.push_back(matvec(p.embed, x));

  // Both attention recurrences read the embedded visits from the most recent
  // backwards, so state i summarises visits i..n.
  std::vector<Var> logits(n), beta(n);
  Var g = zeros_state(tape, p.alpha_rnn.bias);
  Var h = zeros_state(tape, p.beta_rnn.bias);
  for (std::size_t k = n; k-- > 0;) {
    g = tanh(matvec(p.alpha_rnn.input, v[k]) + matvec(p.alpha_rnn.recurrent, g) + p.alpha_rnn.bias);
    h = tanh(matvec(p.beta_rnn.input, v[k]) + matvec(p.beta_rnn.recurrent, h) + p.beta_rnn.bias);
    logits[k] = dot(p.alpha_proj, g) + p.alpha_bias;
    beta[k] = tanh(matvec(p.beta_proj, h) + p.beta_bias);
  }
  Var alpha_vec = softmax(concat(logits));

  RetainTrace trace;
  trace.beta = beta;
  Var context;
  for (std::size_t i = 0; i < n; ++i) {
    Var a = element(alpha_vec, i);
    trace.alpha.push_back(a);
    Var term = scale_by(a, beta[i] * v[i]);
    context = i == 0 ? term : context + term;
  }
  trace.context = context;
  return trace;
}

std::pair<Var, Var> embed_event(const EventT<Var>& p, Task task, bool positive) {
  Tape& tape = *p.weight.tape;
  Var one_hot = tape.constant(positive ? Tensor::vector({1.0, 0.0}) : Tensor::vector({0.0, 1.0}));
  Var projected = tanh(matvec(p.weight, one_hot) + p.bias);
  Var translated = projected - row(p.relation, static_cast<std::size_t>(task));
  return {projected, translated};
}

Var fuse_static(const FusionT<Var>& p, Var context, Var statics) {
  const Var parts[] = {context, statics};
  return tanh(matvec(p.weight, concat(parts)) + p.bias);
}

PatientForward forward_patient(const ModelVars& vars, const BinnedSequence& seq) {
  Tape& tape = *vars.event.bias.tape;
  std::vector<Var> steps = step_inputs(tape, seq.steps);
  PatientForward out;
  if (vars.rnn) {
    out.sequence = encode_rnn(*vars.rnn, steps);
  } else if (vars.retain) {
    RetainTrace trace = encode_retain(*vars.retain, steps);
    out.sequence = trace.context;
    out.alpha = std::move(trace.alpha);
    out.beta = std::move(trace.beta);
  } else {
    throw ContractError("model has no encoder parameters");
  }
  Var statics = tape.constant(Tensor::vector(std::vector<double>(seq.statics.begin(), seq.statics.end())));
  out.fused = fuse_static(vars.fusion, out.sequence, statics);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

RecurrenceT<Var> constants(Tape& tape, const RnnParams& p) {
  return {tape.constant(p.input), tape.constant(p.recurrent), tape.constant(p.bias)};
}

}  // namespace

Tensor encode_rnn(const BinnedSequence& seq, const RnnParams& params) {
  Tape tape;
  RecurrenceT<Var> vars = constants(tape, params);
  return encode_rnn(vars, step_inputs(tape, seq.steps)).value();
}

RetainOutput encode_retain(const BinnedSequence& seq, const RetainParams& params) {
  Tape tape;
  RetainT<Var> vars{tape.constant(params.embed),      constants(tape, params.alpha_rnn),
                    tape.constant(params.alpha_proj), tape.constant(params.alpha_bias),
                    constants(tape, params.beta_rnn), tape.constant(params.beta_proj),
                    tape.constant(params.beta_bias)};
  RetainTrace trace = encode_retain(vars, step_inputs(tape, seq.steps));
  RetainOutput out;
  out.context = trace.context.value();
  const std::size_t n = trace.beta.size();
  const std::size_t l = out.context.size();
  out.beta = Tensor::zeros({n, l});
  for (std::size_t i = 0; i < n; ++i) {
    out.alpha.push_back(trace.alpha[i].value()[0]);
    for (std::size_t j = 0; j < l; ++j) out.beta.at(i, j) = trace.beta[i].value()[j];
  }
  return out;
}

std::pair<Tensor, Tensor> embed_event(Task task, bool positive, const EventParams& params) {
  Tape tape;
  EventT<Var> vars{tape.constant(params.weight), tape.constant(params.bias),
                   tape.constant(params.relation)};
  auto [projected, translated] = embed_event(vars, task, positive);
  return {projected.value(), translated.value()};
}

Tensor fuse_static(const Tensor& context, const StaticVector& statics, const FusionParams& params) {
  Tape tape;
  FusionT<Var> vars{tape.constant(params.weight), tape.constant(params.bias)};
  Var s = tape.constant(Tensor::vector(std::vector<double>(statics.begin(), statics.end())));
  return fuse_static(vars, tape.constant(context), s).value();
}

Tensor represent(const ModelParams& model, const BinnedSequence& seq) {
  Tape tape;
  ModelVars vars = bind_constant(tape, model);
  return forward_patient(vars, seq).fused.value();
}

// ---------------------------------------------------------------------------

using json = nlohmann::json;

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  json tensors = json::array();
  visit_params(
      [&](const std::string& name, const Tensor& t) {
        tensors.push_back({{"name", name},
                           {"shape", t.shape()},
                           {"values", std::vector<double>(t.values().begin(), t.values().end())}});
      },
      checkpoint.params);
  json doc = {{"format", "cehr-checkpoint"},
              {"version", kCheckpointVersion},
              {"encoder", std::string(encoder_name(checkpoint.params.encoder))},
              {"latent", latent_dim(checkpoint.params)},
              {"meta", checkpoint.meta},
              {"tensors", tensors}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << doc.dump() << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  try {
    json doc;
    in >> doc;
    if (doc.at("format").get<std::string>() != "cehr-checkpoint") {
      throw ParseError("checkpoint '" + path + "': unrecognised format");
    }
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError("checkpoint '" + path + "': unsupported version " +
                       std::to_string(doc.at("version").get<int>()));
    }
    Checkpoint cp;
    cp.params = init_model(parse_encoder(doc.at("encoder").get<std::string>()),
                           doc.at("latent").get<std::size_t>(), 0);
    cp.meta = doc.at("meta").get<std::map<std::string, std::string>>();
    std::map<std::string, Tensor> stored;
    for (const json& t : doc.at("tensors")) {
      stored.emplace(t.at("name").get<std::string>(),
                     Tensor(t.at("shape").get<Shape>(), t.at("values").get<std::vector<double>>()));
    }
    visit_params(
        [&](const std::string& name, Tensor& slot) {
          auto it = stored.find(name);
          if (it == stored.end()) throw ParseError("checkpoint '" + path + "': missing tensor " + name);
          if (it->second.shape() != slot.shape()) {
            throw ParseError("checkpoint '" + path + "': tensor " + name + " has shape " +
                             shape_string(it->second.shape()) + ", expected " +
                             shape_string(slot.shape()));
          }
          slot = std::move(it->second);
        },
        cp.params);
    return cp;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
}

}  // namespace cehr
