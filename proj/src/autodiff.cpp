#include "funcnet/autodiff.hpp"

#include <cmath>

namespace funcnet {

namespace {

template <typename T>
Tape<T>& same_tape(Var<T> a, Var<T> b, std::string_view op) {
  if (a.tape == nullptr || a.tape != b.tape) throw TapeError(std::string(op) + ": operands live on different tapes");
  return *a.tape;
}

template <typename T>
Tape<T>& tape_of(Var<T> a, std::string_view op) {
  if (a.tape == nullptr) throw TapeError(std::string(op) + ": operand is not attached to a tape");
  return *a.tape;
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Gradient flowing into an operand that may have been broadcast per channel:
// sums the [N,C,H,W] gradient over everything but the channel axis.
template <typename T>
void accumulate_reduced(Tensor<T>& dst, const Tensor<T>& g) {
  if (dst.shape() == g.shape()) {
    accumulate(dst, g);
    return;
  }
  const std::size_t n = g.shape()[0], c = g.shape()[1], plane = g.shape()[2] * g.shape()[3];
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t base = (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(g[base + i]);
    }
    dst[ch] += static_cast<T>(acc);
  }
}

}  // namespace

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  check_finite(value, "leaf");
  nodes_.push_back(Node{"leaf", std::move(value), {}, {}, requires_grad});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward) {
  Node n{std::string(op), std::move(value), {}, {}, false};
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tape != this) throw TapeError(std::string(op) + ": input belongs to a different tape");
    n.inputs.push_back(in.id);
    n.requires_grad = n.requires_grad || nodes_.at(in.id).requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var<T> v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw TapeError("variable does not belong to this tape");
  return nodes_[v.id];
}

template <typename T>
Gradients<T> Tape<T>::backward(Var<T> loss) const {
  const Node& n = node(loss);
  if (n.value.size() != 1) throw TapeError("backward: loss must be a scalar, got shape " + n.value.shape().to_string());
  return backward(loss, Tensor<T>(n.value.shape(), T(1)));
}

template <typename T>
Gradients<T> Tape<T>::backward(Var<T> output, const Tensor<T>& seed) const {
  const Node& out = node(output);
  if (!out.requires_grad) throw TapeError("backward: output does not depend on any tensor that requires grad");
  require_same_shape(out.value.shape(), seed.shape(), "backward seed");

  std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
  grads[output.id] = seed;
  std::vector<Tensor<T>*> slots;
  for (std::size_t id = output.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!grads[id] || !n.backward) continue;
    slots.assign(n.inputs.size(), nullptr);
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const std::size_t in = n.inputs[i];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor<T>(nodes_[in].value.shape());
      slots[i] = &*grads[in];
    }
    n.backward(*grads[id], slots);
  }
  return Gradients<T>(std::move(grads));
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& tape = same_tape(a, b, "add");
  return tape.record("add", add(a.value(), b.value()), {a, b}, [](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
    if (d[0]) accumulate_reduced(*d[0], g);
    if (d[1]) accumulate_reduced(*d[1], g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  auto& tape = same_tape(a, b, "sub");
  return tape.record("sub", sub(a.value(), b.value()), {a, b}, [](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
    if (d[0]) accumulate_reduced(*d[0], g);
    if (d[1]) accumulate_reduced(*d[1], mul_scalar(g, T(-1)));
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto& tape = same_tape(a, b, "mul");
  return tape.record("mul", mul(a.value(), b.value()), {a, b},
                     [a, b](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
                       if (d[0]) accumulate_reduced(*d[0], mul(g, b.value()));
                       if (d[1]) accumulate_reduced(*d[1], mul(g, a.value()));
                     });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  auto& tape = same_tape(a, b, "div");
  return tape.record("div", div(a.value(), b.value()), {a, b},
                     [a, b](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
                       const Tensor<T> g_over_b = div(g, b.value());
                       if (d[0]) accumulate_reduced(*d[0], g_over_b);
                       if (d[1]) {
                         const Tensor<T> quotient = div(a.value(), b.value());
                         accumulate_reduced(*d[1], mul_scalar(mul(g_over_b, quotient), T(-1)));
                       }
                     });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  auto& tape = tape_of(a, "add_scalar");
  return tape.record("add_scalar", add_scalar(a.value(), s), {a},
                     [](const Tensor<T>& g, std::span<Tensor<T>* const> d) { accumulate(*d[0], g); });
}

template <typename T>
Var<T> mul_scalar(Var<T> a, T s) {
  auto& tape = tape_of(a, "mul_scalar");
  return tape.record("mul_scalar", mul_scalar(a.value(), s), {a},
                     [s](const Tensor<T>& g, std::span<Tensor<T>* const> d) { accumulate(*d[0], mul_scalar(g, s)); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  auto& tape = tape_of(a, "tanh");
  Tensor<T> y = tanh(a.value());
  const std::size_t self = tape.size();
  return tape.record("tanh", std::move(y), {a},
                     [&tape, self](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
                       const Tensor<T>& out = tape.value(Var<T>{&tape, self});
                       for (std::size_t i = 0; i < g.size(); ++i) (*d[0])[i] += g[i] * (T(1) - out[i] * out[i]);
                     });
}

template <typename T>
Var<T> sum(Var<T> a) {
  auto& tape = tape_of(a, "sum");
  return tape.record("sum", sum(a.value()), {a}, [](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
    for (auto& v : d[0]->data()) v += g[0];
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& tape = same_tape(a, b, "matmul");
  return tape.record("matmul", matmul(a.value(), b.value()), {a, b},
                     [a, b](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
                       if (d[0]) accumulate(*d[0], matmul(g, transpose(b.value())));
                       if (d[1]) accumulate(*d[1], matmul(transpose(a.value()), g));
                     });
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias) {
  auto& tape = same_tape(input, kernel, "conv2d");
  same_tape(input, bias, "conv2d");
  return tape.record("conv2d", conv2d(input.value(), kernel.value(), bias.value()), {input, kernel, bias},
                     [input, kernel](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
                       auto grads = conv2d_backward(input.value(), kernel.value(), g, d[0] != nullptr,
                                                    d[1] != nullptr, d[2] != nullptr);
                       if (d[0]) accumulate(*d[0], grads.input);
                       if (d[1]) accumulate(*d[1], grads.kernel);
                       if (d[2]) accumulate(*d[2], grads.bias);
                     });
}

template <typename T>
Var<T> prelu(Var<T> input, Var<T> slope) {
  auto& tape = same_tape(input, slope, "prelu");
  return tape.record(
      "prelu", prelu(input.value(), slope.value()), {input, slope},
      [input, slope](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
        const Tensor<T>& x = input.value();
        const Tensor<T>& a = slope.value();
        const std::size_t n = x.shape()[0], c = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
        for (std::size_t ch = 0; ch < c; ++ch) {
          double slope_acc = 0.0;
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const T xv = x[base + i];
              const bool positive = xv > T(0);
              if (d[0]) (*d[0])[base + i] += positive ? g[base + i] : a[ch] * g[base + i];
              if (!positive) slope_acc += static_cast<double>(g[base + i]) * static_cast<double>(xv);
            }
          }
          if (d[1]) (*d[1])[ch] += static_cast<T>(slope_acc);
        }
      });
}

template <typename T>
Var<T> channel_affine(Var<T> input, Var<T> scale, Var<T> shift) {
  auto& tape = same_tape(input, scale, "channel_affine");
  same_tape(input, shift, "channel_affine");
  return tape.record(
      "channel_affine", channel_affine(input.value(), scale.value(), shift.value()), {input, scale, shift},
      [input, scale](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
        const Tensor<T>& x = input.value();
        const Tensor<T>& a = scale.value();
        const std::size_t n = x.shape()[0], c = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
        for (std::size_t ch = 0; ch < c; ++ch) {
          double scale_acc = 0.0, shift_acc = 0.0;
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const T gv = g[base + i];
              if (d[0]) (*d[0])[base + i] += a[ch] * gv;
              scale_acc += static_cast<double>(gv) * static_cast<double>(x[base + i]);
              shift_acc += static_cast<double>(gv);
            }
          }
          if (d[1]) (*d[1])[ch] += static_cast<T>(scale_acc);
          if (d[2]) (*d[2])[ch] += static_cast<T>(shift_acc);
        }
      });
}

template <typename T>
Var<T> reduce_mean_abs(Var<T> a) {
  auto& tape = tape_of(a, "reduce_mean_abs");
  return tape.record("reduce_mean_abs", reduce_mean_abs(a.value()), {a},
                     [a](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
                       const Tensor<T>& x = a.value();
                       const T scale = g[0] / static_cast<T>(x.size());
                       for (std::size_t i = 0; i < x.size(); ++i) {
                         const T v = x[i];
                         (*d[0])[i] += v > T(0) ? scale : (v < T(0) ? -scale : T(0));
                       }
                     });
}

#define FUNCNET_INSTANTIATE_AUTODIFF(T)                    \
  template class Tape<T>;                                  \
  template Var<T> add(Var<T>, Var<T>);                     \
  template Var<T> sub(Var<T>, Var<T>);                     \
  template Var<T> mul(Var<T>, Var<T>);                     \
  template Var<T> div(Var<T>, Var<T>);                     \
  template Var<T> add_scalar(Var<T>, T);                   \
  template Var<T> mul_scalar(Var<T>, T);                   \
  template Var<T> tanh(Var<T>);                            \
  template Var<T> sum(Var<T>);                             \
  template Var<T> matmul(Var<T>, Var<T>);                  \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>);          \
  template Var<T> prelu(Var<T>, Var<T>);                   \
  template Var<T> channel_affine(Var<T>, Var<T>, Var<T>);  \
  template Var<T> reduce_mean_abs(Var<T>);

FUNCNET_INSTANTIATE_AUTODIFF(float)
FUNCNET_INSTANTIATE_AUTODIFF(double)

#undef FUNCNET_INSTANTIATE_AUTODIFF

}  // namespace funcnet
