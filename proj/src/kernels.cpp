#include "funcnet/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "funcnet/parallel.hpp"

namespace funcnet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

enum class Broadcast { None, Right, Left };

Broadcast broadcast_kind(const Shape& a, const Shape& b, std::string_view op) {
  if (a == b) return Broadcast::None;
  if (b.rank() == 1 && a.rank() == 4 && a[1] == b[0]) return Broadcast::Right;
  if (a.rank() == 1 && b.rank() == 4 && b[1] == a[0]) return Broadcast::Left;
  throw ShapeError(std::string(op) + ": cannot combine shapes " + a.to_string() + " and " + b.to_string());
}

template <typename T, typename F>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, std::string_view op, F f) {
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), op);
  if (kind == Broadcast::None) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    check_finite(out, op);
    return out;
  }
  const Tensor<T>& big = kind == Broadcast::Right ? a : b;
  const Tensor<T>& vec = kind == Broadcast::Right ? b : a;
  const std::size_t n = big.shape()[0], c = big.shape()[1];
  const std::size_t plane = big.shape()[2] * big.shape()[3];
  Tensor<T> out(big.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * plane;
      const T v = vec[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        out[base + i] = kind == Broadcast::Right ? f(big[base + i], v) : f(v, big[base + i]);
      }
    }
  }
  check_finite(out, op);
  return out;
}

void require_rank(const Shape& s, std::size_t rank, std::string_view op, std::string_view what) {
  if (s.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + std::string(what) + " must have rank " + std::to_string(rank) +
                     ", got " + s.to_string());
  }
}

void require_channel_vector(const Shape& input, const Shape& vec, std::string_view op, std::string_view what) {
  require_rank(input, 4, op, "input");
  if (vec.rank() != 1 || vec[0] != input[1]) {
    throw ShapeError(std::string(op) + ": " + std::string(what) + " shape " + vec.to_string() +
                     " does not match channel count " + std::to_string(input[1]));
  }
}

// Column matrix [Cin*k*k, H*W] for one sample; out-of-image taps read zero.
template <typename T>
void im2col(const T* image, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto ih = static_cast<std::ptrdiff_t>(h), iw = static_cast<std::ptrdiff_t>(w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < c_in; ++c) {
    const T* plane = image + c * h * w;
    for (std::size_t kh = 0; kh < k; ++kh) {
      for (std::size_t kw = 0; kw < k; ++kw, ++row) {
        T* dst = col + row * h * w;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(kh) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kw) - pad;
        for (std::ptrdiff_t y = 0; y < ih; ++y) {
          const std::ptrdiff_t sy = y + dy;
          T* line = dst + y * iw;
          if (sy < 0 || sy >= ih) {
            std::fill(line, line + iw, T(0));
            continue;
          }
          const T* src = plane + sy * iw;
          const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx), hi = std::min(iw, iw - dx);
          for (std::ptrdiff_t x = 0; x < lo; ++x) line[x] = T(0);
          for (std::ptrdiff_t x = lo; x < hi; ++x) line[x] = src[x + dx];
          for (std::ptrdiff_t x = hi; x < iw; ++x) line[x] = T(0);
        }
      }
    }
  }
}

void check_conv_shapes(const Shape& in, const Shape& kernel) {
  require_rank(in, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  if (kernel[2] != kernel[3]) throw ShapeError("conv2d: kernel must be square, got " + kernel.to_string());
  if (kernel[2] % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + kernel.to_string());
  if (kernel[1] != in[1]) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel[1]) + " input channels, input has " +
                     std::to_string(in[1]));
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "add", [](T x, T y) { return x + y; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "sub", [](T x, T y) { return x - y; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "mul", [](T x, T y) { return x * y; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "div", [](T x, T y) { return x / y; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s;
  check_finite(out, "add_scalar");
  return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  check_finite(out, "mul_scalar");
  return out;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
  check_finite(out, "tanh");
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += static_cast<double>(v);
  Tensor<T> out(Shape{1}, static_cast<T>(acc));
  check_finite(out, "sum");
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul", "lhs");
  require_rank(b.shape(), 2, "matmul", "rhs");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape().to_string() + " x " + b.shape().to_string());
  }
  Tensor<T> out(Shape{m, n});
  MatMap<T>(out.data().data(), m, n).noalias() =
      ConstMatMap<T>(a.data().data(), m, k) * ConstMatMap<T>(b.data().data(), k, n);
  check_finite(out, "matmul");
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a.shape(), 2, "transpose", "input");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  check_conv_shapes(input.shape(), kernel.shape());
  const std::size_t n = input.shape()[0], c_in = input.shape()[1];
  const std::size_t h = input.shape()[2], w = input.shape()[3];
  const std::size_t c_out = kernel.shape()[0], k = kernel.shape()[2];
  if (bias.shape().rank() != 1 || bias.shape()[0] != c_out) {
    throw ShapeError("conv2d: bias shape " + bias.shape().to_string() + " does not match " +
                     std::to_string(c_out) + " output channels");
  }
  const std::size_t rows = c_in * k * k, hw = h * w;
  Tensor<T> out(Shape{n, c_out, h, w});
  const ConstMatMap<T> kmat(kernel.data().data(), c_out, rows);
  parallel_for(n, [&](std::size_t s) {
    auto col_buf = std::unique_ptr<T[]>(new T[rows * hw]);
    T* const col = col_buf.get();
    im2col(input.data().data() + s * c_in * hw, c_in, h, w, k, col);
    MatMap<T> dst(out.data().data() + s * c_out * hw, c_out, hw);
    dst.noalias() = kmat * ConstMatMap<T>(col, rows, hw);
    for (std::size_t c = 0; c < c_out; ++c) dst.row(c).array() += bias[c];
  });
  check_finite(out, "conv2d");
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                               bool want_input, bool want_kernel, bool want_bias) {
  check_conv_shapes(input.shape(), kernel.shape());
  const std::size_t n = input.shape()[0], c_in = input.shape()[1];
  const std::size_t h = input.shape()[2], w = input.shape()[3];
  const std::size_t c_out = kernel.shape()[0], k = kernel.shape()[2];
  const std::size_t rows = c_in * k * k, hw = h * w;
  require_same_shape(grad_out.shape(), Shape{n, c_out, h, w}, "conv2d_backward");

  Conv2dGrads<T> grads;
  if (want_input) grads.input = Tensor<T>(input.shape());
  std::vector<Tensor<T>> kernel_parts(want_kernel ? n : 0);
  // Stride-1 "same" convolution is adjoint to convolving with the spatially
  // flipped, channel-transposed kernel, laid out here as [c_in, c_out * k * k].
  const std::size_t g_rows = c_out * k * k;
  std::vector<T> flipped(want_input ? c_in * g_rows : 0);
  if (want_input) {
    for (std::size_t co = 0; co < c_out; ++co)
      for (std::size_t ci = 0; ci < c_in; ++ci)
        for (std::size_t kh = 0; kh < k; ++kh)
          for (std::size_t kw = 0; kw < k; ++kw) {
            flipped[ci * g_rows + (co * k + (k - 1 - kh)) * k + (k - 1 - kw)] = kernel[((co * c_in + ci) * k + kh) * k + kw];
          }
  }

  if (want_input || want_kernel) {
    parallel_for(n, [&](std::size_t s) {
      const ConstMatMap<T> g(grad_out.data().data() + s * c_out * hw, c_out, hw);
      auto col_buf = std::unique_ptr<T[]>(new T[std::max(rows, g_rows) * hw]);
      T* const col = col_buf.get();
      if (want_kernel) {
        im2col(input.data().data() + s * c_in * hw, c_in, h, w, k, col);
        Tensor<T> part(kernel.shape());
        MatMap<T>(part.data().data(), c_out, rows).noalias() = g * ConstMatMap<T>(col, rows, hw).transpose();
        kernel_parts[s] = std::move(part);
      }
      if (want_input) {
        im2col(grad_out.data().data() + s * c_out * hw, c_out, h, w, k, col);
        MatMap<T>(grads.input.data().data() + s * c_in * hw, c_in, hw).noalias() =
            ConstMatMap<T>(flipped.data(), c_in, g_rows) * ConstMatMap<T>(col, g_rows, hw);
      }
    });
  }
  if (want_kernel) {
    grads.kernel = std::move(kernel_parts[0]);
    for (std::size_t s = 1; s < n; ++s) {
      for (std::size_t i = 0; i < grads.kernel.size(); ++i) grads.kernel[i] += kernel_parts[s][i];
    }
  }
  if (want_bias) {
    grads.bias = Tensor<T>(Shape{c_out});
    for (std::size_t c = 0; c < c_out; ++c) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* g = grad_out.data().data() + (s * c_out + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += static_cast<double>(g[i]);
      }
      grads.bias[c] = static_cast<T>(acc);
    }
  }
  return grads;
}

template <typename T>
Tensor<T> prelu(const Tensor<T>& input, const Tensor<T>& slope) {
  require_channel_vector(input.shape(), slope.shape(), "prelu", "slope");
  const std::size_t n = input.shape()[0], c = input.shape()[1];
  const std::size_t plane = input.shape()[2] * input.shape()[3];
  Tensor<T> out(input.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * plane;
      const T a = slope[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        const T x = input[base + i];
        out[base + i] = x > T(0) ? x : a * x;
      }
    }
  }
  check_finite(out, "prelu");
  return out;
}

template <typename T>
Tensor<T> channel_affine(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift) {
  require_channel_vector(input.shape(), scale.shape(), "channel_affine", "scale");
  require_channel_vector(input.shape(), shift.shape(), "channel_affine", "shift");
  const std::size_t n = input.shape()[0], c = input.shape()[1];
  const std::size_t plane = input.shape()[2] * input.shape()[3];
  Tensor<T> out(input.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[base + i] = scale[ch] * input[base + i] + shift[ch];
    }
  }
  check_finite(out, "channel_affine");
  return out;
}

template <typename T>
Tensor<T> reduce_mean_abs(const Tensor<T>& a) {
  if (a.empty()) throw ShapeError("reduce_mean_abs: empty tensor");
  double acc = 0.0;
  for (T v : a.data()) acc += std::abs(static_cast<double>(v));
  Tensor<T> out(Shape{1}, static_cast<T>(acc / static_cast<double>(a.size())));
  check_finite(out, "reduce_mean_abs");
  return out;
}

std::size_t conv2d_macs(std::size_t n, std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t h,
                        std::size_t w) {
  return n * c_out * c_in * k * k * h * w;
}

#define FUNCNET_INSTANTIATE_KERNELS(T)                                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                      \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                      \
  template Tensor<T> tanh(const Tensor<T>&);                                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> transpose(const Tensor<T>&);                                                          \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool, bool, \
                                          bool);                                                            \
  template Tensor<T> prelu(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> channel_affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> reduce_mean_abs(const Tensor<T>&);

FUNCNET_INSTANTIATE_KERNELS(float)
FUNCNET_INSTANTIATE_KERNELS(double)

#undef FUNCNET_INSTANTIATE_KERNELS

}  // namespace funcnet
