#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "leaffed/tensor.hpp"

namespace leaffed {

// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

// Single-owner record of a forward pass. Backward replays the recorded
// operations in exact reverse order, accumulating into lazily allocated
// gradient buffers.
template <typename T>
class Tape {
 public:
  using TensorT = BasicTensor<T>;
  using BackwardFn = std::function<void(Tape&, const TensorT& out_grad)>;

  Var constant(TensorT value) { return push(std::move(value), false, {}, "constant", {}); }

  // Differentiable leaf. Named leaves are the parameters of the pass.
  Var variable(TensorT value, std::string name = {}) {
    Var v = push(std::move(value), true, {}, "variable", {});
    if (!name.empty()) {
      if (!named_.emplace(name, v.id).second) {
        throw ValidationError("duplicate parameter name on tape: " + name);
      }
      nodes_[v.id].name = std::move(name);
    }
    return v;
  }

  // Appends an op result. The node requires a gradient iff some input does;
  // otherwise the backward closure is dropped.
  Var record(TensorT value, std::initializer_list<Var> inputs, std::string_view op, BackwardFn backward) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : BackwardFn{}, op, inputs);
  }

  const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::string_view op_name(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool has_grad(Var v) const { return nodes_.at(v.id).grad_allocated; }

  // Zero-filled tensor when nothing reached the node.
  TensorT grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad_allocated) return n.grad;
    return TensorT(n.value.shape());
  }

  TensorT grad(const std::string& parameter) const { return grad(Var{named_.at(parameter)}); }

  Var find(const std::string& parameter) const {
    auto it = named_.find(parameter);
    return it == named_.end() ? Var{} : Var{it->second};
  }

  // Gradient accumulator for an input; allocated as zeros on first use.
  TensorT& grad_buffer(Var v) {
    Node& n = nodes_.at(v.id);
    if (!n.grad_allocated) {
      n.grad = TensorT(n.value.shape());
      n.grad_allocated = true;
    }
    return n.grad;
  }

  // Seeds d(output)/d(output) = 1 for a single-element output.
  void backward(Var output) {
    const Node& out = nodes_.at(output.id);
    if (out.value.size() != 1) {
      throw ShapeError("backward requires a scalar output, got " + shape_string(out.value.shape()));
    }
    for (Node& n : nodes_) {
      n.grad_allocated = false;
      n.grad = TensorT();
    }
    visit_order_.clear();
    if (!out.requires_grad) return;
    grad_buffer(output).fill(T{1});
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.grad_allocated || !n.backward) continue;
      visit_order_.push_back(i);
      // Copy: the closure may allocate other buffers and invalidate refs.
      const TensorT out_grad = n.grad;
      n.backward(*this, out_grad);
    }
  }

  // Node ids whose backward closure ran, in the order they ran.
  const std::vector<std::size_t>& last_backward_order() const noexcept { return visit_order_; }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool grad_allocated = false;
    bool requires_grad = false;
    BackwardFn backward;
    std::string op;
    std::string name;
    std::vector<std::size_t> inputs;
  };

  Var push(TensorT value, bool requires_grad, BackwardFn backward, std::string_view op,
           std::initializer_list<Var> inputs) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    n.op = std::string(op);
    for (Var in : inputs) n.inputs.push_back(in.id);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> named_;
  std::vector<std::size_t> visit_order_;
};

namespace ops {

// out[i,j] = b[j] + sum_k x[i,k] * W[k,j]
template <typename T>
Var dense(Tape<T>& tape, Var x, Var weight, Var bias);

template <typename T>
Var relu(Tape<T>& tape, Var x);

// Column concatenation of two 2-D tensors with equal row counts.
template <typename T>
Var concat(Tape<T>& tape, Var a, Var b);

// (n, d) -> (n, r, d)
template <typename T>
Var repeat_vector(Tape<T>& tape, Var x, std::size_t repeats);

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

// 3x3 convolution, stride 1, zero "same" padding. x is (n, H, W, Cin); the
// kernel is stored as (9 * Cin, Cout) in (dy, dx, cin) row order.
template <typename T>
Var conv3x3(Tape<T>& tape, Var x, Var kernel, Var bias);

// 2x2 average pooling with stride 2; odd trailing rows/cols are dropped.
template <typename T>
Var avg_pool2(Tape<T>& tape, Var x);

// Mean categorical cross-entropy of softmax(logits) against one-hot rows.
// Returns a single-element tensor.
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, const BasicTensor<T>& onehot);

// Sum of all elements.
template <typename T>
Var sum(Tape<T>& tape, Var x);

// sum_i coeffs[i] * x[i]
template <typename T>
Var dot(Tape<T>& tape, Var x, const BasicTensor<T>& coeffs);

}  // namespace ops

// Row-wise softmax computed with the log-sum-exp shift.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits);

// Validates that each row has a single 1 and zeros elsewhere.
template <typename T>
void validate_onehot(const BasicTensor<T>& onehot);

template <typename T>
BasicTensor<T> onehot_rows(std::span<const int> labels, std::size_t classes);

}  // namespace leaffed
