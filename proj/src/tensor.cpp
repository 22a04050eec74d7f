#include "funcnet/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace funcnet {

namespace {

std::size_t checked_numel(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw ShapeError("shape must have at least one dimension");
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("shape dimensions must be positive");
    if (n > std::numeric_limits<std::size_t>::max() / d) throw ShapeError("shape element count overflows");
    n *= d;
  }
  return n;
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)), numel_(checked_numel(dims_)) {}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.to_string());
  }
}

template <typename T>
T& Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename T>
const T& Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
void check_finite(std::span<const T> values, std::string_view op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NonFiniteError("non-finite value in result of " + std::string(op) + " at element " +
                           std::to_string(i));
    }
  }
}

void require_same_shape(const Shape& a, const Shape& b, std::string_view op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + a.to_string() + " vs " + b.to_string());
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite<float>(std::span<const float>, std::string_view);
template void check_finite<double>(std::span<const double>, std::string_view);

}  // namespace funcnet
