#pragma once

// Gradient-free tensor kernels. The tape operations in autodiff.hpp wrap these,
// and the materialized-network inference path calls them directly, so both paths
// produce identical values.

#include <cstddef>

#include "funcnet/tensor.hpp"

namespace funcnet {

// Elementwise arithmetic. Operands have equal shapes, or one of them is a [C]
// vector broadcast along axis 1 of an [N,C,H,W] tensor.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s);

template <typename T>
Tensor<T> tanh(const Tensor<T>& a);

/// Sum of all elements as a [1] tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

/// [M,K] x [K,N] -> [M,N].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

/// Stride-1, zero-padded ("same") 2-D cross-correlation with an odd square kernel.
/// input [N,Cin,H,W], kernel [Cout,Cin,k,k], bias [Cout] -> [N,Cout,H,W].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  Tensor<T> bias;
};

/// Gradients of conv2d given the upstream gradient. Unrequested parts stay empty.
template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                               bool want_input, bool want_kernel, bool want_bias);

/// Per-channel PReLU: x if x > 0 else slope[c] * x.
template <typename T>
Tensor<T> prelu(const Tensor<T>& input, const Tensor<T>& slope);

/// Per-channel scale[c] * x + shift[c].
template <typename T>
Tensor<T> channel_affine(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift);

/// Mean of |a_i| as a [1] tensor.
template <typename T>
Tensor<T> reduce_mean_abs(const Tensor<T>& a);

/// Multiply-accumulate count of one conv2d call.
std::size_t conv2d_macs(std::size_t n, std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t h,
                        std::size_t w);

}  // namespace funcnet
