#pragma once

// Functional parameters: every weight tensor is a linear function of the task
// parameter, w(x) = t(x) * (theta_b - theta_a) + theta_a, where
// t(x) = (H(x) - H(x_a)) / (H(x_b) - H(x_a)) and H is a task-specific map.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "funcnet/autodiff.hpp"
#include "funcnet/rng.hpp"
#include "funcnet/tensor.hpp"

namespace funcnet {

/// Closed support [lower, upper] of the task parameter.
class ParamDomain {
 public:
  ParamDomain(double lower, double upper);

  [[nodiscard]] double lower() const noexcept { return lower_; }
  [[nodiscard]] double upper() const noexcept { return upper_; }
  [[nodiscard]] bool contains(double x) const noexcept { return x >= lower_ && x <= upper_; }
  /// Throws DomainError naming the bounds when x is outside.
  void require(double x) const;
  [[nodiscard]] std::string to_string() const;

  friend bool operator==(const ParamDomain&, const ParamDomain&) = default;

 private:
  double lower_;
  double upper_;
};

enum class MapKind { Identity, Reciprocal, JpegScale, LearnedMlp };

[[nodiscard]] std::string_view to_string(MapKind kind);
/// Accepts "identity", "reciprocal", "jpeg", "mlp".
[[nodiscard]] MapKind map_kind_from_string(std::string_view name);

/// Learned H: a 1 -> 16 -> 1 tanh perceptron shared by every functional parameter.
/// The input is rescaled to u = (x - offset) * scale before the first layer.
template <typename T>
struct MlpH {
  static constexpr std::size_t hidden = 16;

  Tensor<T> w1;  // [16,1]
  Tensor<T> b1;  // [16,1]
  Tensor<T> w2;  // [1,16]
  Tensor<T> b2;  // [1,1]
  double input_offset = 0.0;
  double input_scale = 1.0;

  /// Monotonically increasing at initialization: positive input and output weights.
  static MlpH init(const ParamDomain& domain, Rng& rng);
  static MlpH zeros(const ParamDomain& domain);

  [[nodiscard]] double operator()(double x) const;
};

template <typename T>
struct ParamMap {
  MapKind kind = MapKind::Identity;
  std::optional<MlpH<T>> mlp;  // set iff kind == LearnedMlp
};

/// H(x) for the fixed maps. Reciprocal at x = 0 throws DomainError.
double h_eval(MapKind kind, double x);
template <typename T>
double h_eval(const ParamMap<T>& map, double x);

/// (H(x) - H(x_a)) / (H(x_b) - H(x_a)), computed in double.
/// Throws DomainError for x outside the domain or a degenerate map.
template <typename T>
double normalize(const ParamDomain& domain, const ParamMap<T>& map, double x);

/// Endpoint pair (theta_a, theta_b) defining one weight tensor.
template <typename T>
struct FuncParam {
  Tensor<T> theta_a;
  Tensor<T> theta_b;

  [[nodiscard]] const Shape& shape() const { return theta_a.shape(); }
  [[nodiscard]] std::size_t scalar_count() const { return theta_a.size() + theta_b.size(); }
};

/// w = t * (theta_b - theta_a) + theta_a elementwise. Exact at t = 0 and t = 1 and
/// bounded by the endpoints for t in [0,1].
template <typename T>
Tensor<T> evaluate(const FuncParam<T>& p, double t);

/// Splits dL/dw into (dL/dtheta_a, dL/dtheta_b) = ((1 - t) g, t g). The pair sums back to g.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> route_gradients(const Tensor<T>& grad_w, double t);

/// Both endpoints drawn independently from N(0, 2 / fan_in).
template <typename T>
FuncParam<T> init_he(const Shape& shape, std::size_t fan_in, Rng& rng);

template <typename T>
FuncParam<T> init_constant(const Shape& shape, T value);

/// Tape version of evaluate() with t fixed for the whole forward pass.
template <typename T>
Var<T> evaluate(Var<T> theta_a, Var<T> theta_b, double t);

/// Tape version with a differentiable [1]-shaped t (learned H).
template <typename T>
Var<T> evaluate(Var<T> theta_a, Var<T> theta_b, Var<T> t);

/// Output of the learned H for input u, shape [1,1]. Works on plain tensors and on
/// tape variables with identical arithmetic.
template <typename V>
V mlp_h_forward(const V& w1, const V& b1, const V& w2, const V& b2, const V& u) {
  return add(matmul(w2, tanh(add(matmul(w1, u), b1))), b2);
}

template <typename T>
T first_element(const Tensor<T>& t) {
  return t[0];
}
template <typename T>
T first_element(Var<T> v) {
  return v.value()[0];
}

/// t for the learned H from rescaled inputs u(x), u(x_a), u(x_b), each [1,1].
/// Throws DomainError when H(x_b) == H(x_a).
template <typename V>
V mlp_normalize(const V& w1, const V& b1, const V& w2, const V& b2, const V& u, const V& u_lower,
                const V& u_upper) {
  const V h = mlp_h_forward(w1, b1, w2, b2, u);
  const V h_lower = mlp_h_forward(w1, b1, w2, b2, u_lower);
  const V h_upper = mlp_h_forward(w1, b1, w2, b2, u_upper);
  const V span = sub(h_upper, h_lower);
  if (first_element(span) == 0) throw DomainError("degenerate parameter map: H(x_b) == H(x_a)");
  return div(sub(h, h_lower), span);
}

}  // namespace funcnet
