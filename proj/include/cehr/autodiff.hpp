#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cehr/tensor.hpp"

namespace cehr {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive and has not been cleared.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
};

/// Reverse-mode gradient tape. Every op appends one node holding its forward
/// value and a closure that scatters the node's gradient into its inputs.
class Tape {
 public:
  using Backward =
      std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input; receives a gradient slot.
  Var leaf(Tensor value);
  /// Fixed input; gradients are not propagated into it.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.index].value; }
  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }

  /// Gradient of the last backward() target with respect to `v`. Nodes the
  /// loss does not depend on report an all-zero tensor of matching shape.
  Tensor grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and walks the graph in reverse. Throws
  /// ContractError if `loss` is not a single-element tensor.
  void backward(Var loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);
  /// Gradient accumulator for an input; allocated as zeros on first touch.
  Tensor& grad_slot(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise (shapes must match exactly).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var neg(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
/// log(sigmoid(x)) evaluated as -softplus(-x).
Var log_sigmoid(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

/// Matrix product of rank-2 tensors.
Var matmul(Var a, Var b);
/// Matrix (rows x cols) times rank-1 vector of length cols.
Var matvec(Var a, Var x);
Var dot(Var a, Var b);
Var sum(Var a);
/// Numerically stable softmax over a rank-1 tensor.
Var softmax(Var a);
/// Concatenation of rank-1 tensors.
Var concat(std::span<const Var> parts);
/// Single element of a tensor (flat index) as a scalar.
Var element(Var a, std::size_t index);
/// One row of a matrix as a rank-1 tensor.
Var row(Var a, std::size_t r);
/// Scalar (single element) times tensor.
Var scale_by(Var scalar, Var a);

// Plain-value helpers shared by ops and callers that do not need a tape.
double sigmoid(double x);
double log_sigmoid(double x);
double softplus(double x);

}  // namespace cehr
