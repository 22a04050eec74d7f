#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "funcnet/errors.hpp"

namespace funcnet {

/// Dimensions of a dense row-major array. Every dim is at least 1.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  [[nodiscard]] std::size_t rank() const noexcept { return dims_.size(); }
  [[nodiscard]] std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  [[nodiscard]] const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  [[nodiscard]] std::size_t numel() const noexcept { return numel_; }
  [[nodiscard]] std::string to_string() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::size_t numel_ = 0;
};

/// Dense n-dimensional array of float or double with value semantics.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::span<T> data() noexcept { return data_; }
  [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element of a rank-4 [N,C,H,W] tensor.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  [[nodiscard]] Tensor reshaped(Shape shape) const;

  /// Converts element type (float <-> double).
  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Throws NonFiniteError naming `op` if any element is NaN or infinite.
template <typename T>
void check_finite(std::span<const T> values, std::string_view op);

template <typename T>
void check_finite(const Tensor<T>& t, std::string_view op) {
  check_finite<T>(t.data(), op);
}

/// Throws ShapeError unless `a` and `b` have identical shapes.
void require_same_shape(const Shape& a, const Shape& b, std::string_view op);

}  // namespace funcnet
