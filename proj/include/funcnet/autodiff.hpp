#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "funcnet/kernels.hpp"
#include "funcnet/tensor.hpp"

namespace funcnet {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  [[nodiscard]] const Tensor<T>& value() const { return tape->value(*this); }
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
};

/// Gradients keyed by tape node. Missing entries mean zero gradient.
template <typename T>
class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<Tensor<T>>> grads) : grads_(std::move(grads)) {}

  [[nodiscard]] const Tensor<T>* find(std::size_t id) const {
    return id < grads_.size() && grads_[id] ? &*grads_[id] : nullptr;
  }
  [[nodiscard]] const Tensor<T>* find(Var<T> v) const { return find(v.id); }
  [[nodiscard]] bool contains(Var<T> v) const { return find(v) != nullptr; }

  /// Gradient of `v`, or zeros of its shape when the loss does not depend on it.
  [[nodiscard]] Tensor<T> get_or_zero(Var<T> v) const {
    if (const auto* g = find(v)) return *g;
    return Tensor<T>(v.shape());
  }

 private:
  std::vector<std::optional<Tensor<T>>> grads_;
};

/// Append-only record of operations for reverse-mode differentiation.
/// Insertion order is a topological order; backward walks it in reverse once.
/// A tape belongs to one logical thread.
template <typename T>
class Tape {
 public:
  /// Receives the upstream gradient and one accumulation buffer per input;
  /// a null buffer means that input does not need a gradient.
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, std::span<Tensor<T>* const> input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Appends an operation result. The backward function is kept only when some
  /// input requires a gradient.
  Var<T> record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward);

  [[nodiscard]] const Tensor<T>& value(Var<T> v) const { return node(v).value; }
  [[nodiscard]] bool requires_grad(Var<T> v) const { return node(v).requires_grad; }
  [[nodiscard]] std::string_view op(Var<T> v) const { return node(v).op; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar loss.
  [[nodiscard]] Gradients<T> backward(Var<T> loss) const;

  /// Reverse sweep seeded with an arbitrary upstream gradient of `output`'s shape.
  [[nodiscard]] Gradients<T> backward(Var<T> output, const Tensor<T>& seed) const;

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  const Node& node(Var<T> v) const;

  std::vector<Node> nodes_;
};

// Differentiable operations. Each mirrors the gradient-free kernel of the same name.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> div(Var<T> a, Var<T> b);
template <typename T>
Var<T> add_scalar(Var<T> a, T s);
template <typename T>
Var<T> mul_scalar(Var<T> a, T s);
template <typename T>
Var<T> tanh(Var<T> a);
template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias);
template <typename T>
Var<T> prelu(Var<T> input, Var<T> slope);
template <typename T>
Var<T> channel_affine(Var<T> input, Var<T> scale, Var<T> shift);
/// Backward uses sign(a_i)/count with sign(0) = 0.
template <typename T>
Var<T> reduce_mean_abs(Var<T> a);

/// Tensor of a [1] scalar node, as a plain number.
template <typename T>
double scalar_value(Var<T> v) {
  if (v.value().size() != 1) throw ShapeError("scalar_value: tensor is not a scalar, shape " + v.shape().to_string());
  return static_cast<double>(v.value()[0]);
}

}  // namespace funcnet
