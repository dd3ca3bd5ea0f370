#include "cehr/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "cehr/errors.hpp"

namespace cehr {

const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, true, false, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, false, false, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape != this) throw ContractError("op mixes variables from different tapes");
    needs = needs || nodes_[in.index].requires_grad;
  }
  nodes_.push_back(
      Node{std::move(value), Tensor{}, needs, false, needs ? std::move(backward) : Backward{}});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_slot(Var v) {
  Node& node = nodes_[v.index];
  if (!node.has_grad) {
    node.grad = Tensor::zeros(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[v.index];
  if (node.has_grad) return node.grad;
  return Tensor::zeros(node.value.shape());
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
  if (nodes_[loss.index].value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(nodes_[loss.index].value.shape()));
  }
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor{};
  }
  grad_slot(loss)[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.requires_grad || !node.backward) continue;
    // Closures only write into earlier nodes; no node is appended here.
    node.backward(*this, node.value, node.grad);
  }
}

// ---------------------------------------------------------------------------
// Scalar helpers

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log_sigmoid(double x) { return -softplus(-x); }

// ---------------------------------------------------------------------------
// Ops

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(a.shape()));
  }
}

bool wants(Var v) { return v.tape->requires_grad(v); }

// Elementwise map whose derivative is expressed through (x, y).
template <class F, class D>
Var elementwise(Var a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return a.tape->record(std::move(out), {a}, [a, dfdx](Tape& t, const Tensor& y, const Tensor& g) {
    const Tensor& x = a.value();
    Tensor& slot = t.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!wants(v)) continue;
      Tensor& slot = t.grad_slot(v);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (wants(a)) {
      Tensor& slot = t.grad_slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
    }
    if (wants(b)) {
      Tensor& slot = t.grad_slot(b);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (wants(a)) {
      Tensor& slot = t.grad_slot(a);
      const Tensor& y = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i] * y[i];
    }
    if (wants(b)) {
      Tensor& slot = t.grad_slot(b);
      const Tensor& x = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  return elementwise(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
  return elementwise(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return elementwise(
      a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var a) {
  return elementwise(
      a, [](double x) { return log_sigmoid(x); }, [](double x, double) { return sigmoid(-x); });
}

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_string(A.shape()) +
                     " and " + shape_string(B.shape()));
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * B.at(p, j);
    }
  }
  return a.tape->record(std::move(out), {a, b},
                        [a, b, m, k, n](Tape& t, const Tensor&, const Tensor& g) {
                          const Tensor& A = a.value();
                          const Tensor& B = b.value();
                          if (wants(a)) {
                            Tensor& dA = t.grad_slot(a);
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                double acc = 0.0;
                                for (std::size_t j = 0; j < n; ++j) acc += g.at(i, j) * B.at(p, j);
                                dA.at(i, p) += acc;
                              }
                          }
                          if (wants(b)) {
                            Tensor& dB = t.grad_slot(b);
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                const double aip = A.at(i, p);
                                for (std::size_t j = 0; j < n; ++j) dB.at(p, j) += aip * g.at(i, j);
                              }
                          }
                        });
}

Var matvec(Var a, Var x) {
  require_rank("matvec", a, 2);
  require_rank("matvec", x, 1);
  const Tensor& A = a.value();
  const Tensor& v = x.value();
  if (A.cols() != v.size()) {
    throw ShapeError("matvec: matrix " + shape_string(A.shape()) + " cannot multiply vector " +
                     shape_string(v.shape()));
  }
  const std::size_t m = A.rows(), k = A.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A.data() + i * k;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += arow[j] * v[j];
    out[i] = acc;
  }
  return a.tape->record(std::move(out), {a, x}, [a, x, m, k](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& A = a.value();
    const Tensor& v = x.value();
    if (wants(a)) {
      Tensor& dA = t.grad_slot(a);
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        double* drow = dA.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) drow[j] += gi * v[j];
      }
    }
    if (wants(x)) {
      Tensor& dx = t.grad_slot(x);
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        const double* arow = A.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) dx[j] += arow[j] * gi;
      }
    }
  });
}

Var dot(Var a, Var b) {
  require_same_shape("dot", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return a.tape->record(Tensor::scalar(acc), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const double s = g[0];
    if (wants(a)) {
      Tensor& slot = t.grad_slot(a);
      const Tensor& y = b.value();
      for (std::size_t i = 0; i < y.size(); ++i) slot[i] += s * y[i];
    }
    if (wants(b)) {
      Tensor& slot = t.grad_slot(b);
      const Tensor& x = a.value();
      for (std::size_t i = 0; i < x.size(); ++i) slot[i] += s * x[i];
    }
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return a.tape->record(Tensor::scalar(acc), {a}, [a](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& slot = t.grad_slot(a);
    for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[0];
  });
}

Var softmax(Var a) {
  require_rank("softmax", a, 1);
  const Tensor& x = a.value();
  const double peak = *std::max_element(x.values().begin(), x.values().end());
  Tensor out(x.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (out[i] = std::exp(x[i] - peak));
  for (std::size_t i = 0; i < x.size(); ++i) out[i] /= total;
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& y, const Tensor& g) {
    double gy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
    Tensor& slot = t.grad_slot(a);
    for (std::size_t i = 0; i < y.size(); ++i) slot[i] += y[i] * (g[i] - gy);
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<double> values;
  for (const Var& p : parts) {
    require_rank("concat", p, 1);
    const auto v = p.value().values();
    values.insert(values.end(), v.begin(), v.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  Tape* tape = parts.front().tape;
  return tape->record(Tensor::vector(std::move(values)), parts,
                      [inputs](Tape& t, const Tensor&, const Tensor& g) {
                        std::size_t offset = 0;
                        for (const Var& p : inputs) {
                          const std::size_t n = p.size();
                          if (wants(p)) {
                            Tensor& slot = t.grad_slot(p);
                            for (std::size_t i = 0; i < n; ++i) slot[i] += g[offset + i];
                          }
                          offset += n;
                        }
                      });
}

Var element(Var a, std::size_t index) {
  if (index >= a.size()) {
    throw ShapeError("element: index " + std::to_string(index) + " out of range for " +
                     shape_string(a.shape()));
  }
  return a.tape->record(Tensor::scalar(a.value()[index]), {a},
                        [a, index](Tape& t, const Tensor&, const Tensor& g) {
                          t.grad_slot(a)[index] += g[0];
                        });
}

Var row(Var a, std::size_t r) {
  require_rank("row", a, 2);
  if (r >= a.value().rows()) {
    throw ShapeError("row: index " + std::to_string(r) + " out of range for " +
                     shape_string(a.shape()));
  }
  const std::size_t c = a.value().cols();
  return a.tape->record(Tensor::vector(a.value().row(r)), {a},
                        [a, r, c](Tape& t, const Tensor&, const Tensor& g) {
                          Tensor& slot = t.grad_slot(a);
                          for (std::size_t j = 0; j < c; ++j) slot.at(r, j) += g[j];
                        });
}

Var scale_by(Var s, Var a) {
  if (s.size() != 1) {
    throw ShapeError("scale_by: scale must have one element, got " + shape_string(s.shape()));
  }
  const double factor = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return a.tape->record(std::move(out), {s, a}, [s, a](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& x = a.value();
    if (wants(s)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
      t.grad_slot(s)[0] += acc;
    }
    if (wants(a)) {
      const double factor = s.value()[0];
      Tensor& slot = t.grad_slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += factor * g[i];
    }
  });
}

}  // namespace cehr
