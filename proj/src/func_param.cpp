#include "funcnet/func_param.hpp"

#include <cmath>
#include <sstream>

namespace funcnet {

ParamDomain::ParamDomain(double lower, double upper) : lower_(lower), upper_(upper) {
  if (!std::isfinite(lower) || !std::isfinite(upper)) throw DomainError("parameter domain bounds must be finite");
  if (!(lower < upper)) throw DomainError("parameter domain requires lower < upper, got " + to_string());
}

void ParamDomain::require(double x) const {
  if (!contains(x)) {
    std::ostringstream os;
    os << "parameter " << x << " is outside the stored domain " << to_string();
    throw DomainError(os.str());
  }
}

std::string ParamDomain::to_string() const {
  std::ostringstream os;
  os << '[' << lower_ << ',' << upper_ << ']';
  return os.str();
}

std::string_view to_string(MapKind kind) {
  switch (kind) {
    case MapKind::Identity: return "identity";
    case MapKind::Reciprocal: return "reciprocal";
    case MapKind::JpegScale: return "jpeg";
    case MapKind::LearnedMlp: return "mlp";
  }
  return "unknown";
}

MapKind map_kind_from_string(std::string_view name) {
  if (name == "identity") return MapKind::Identity;
  if (name == "reciprocal") return MapKind::Reciprocal;
  if (name == "jpeg") return MapKind::JpegScale;
  if (name == "mlp") return MapKind::LearnedMlp;
  throw ConfigError("unknown parameter map '" + std::string(name) + "' (expected identity, reciprocal, jpeg, mlp)");
}

double h_eval(MapKind kind, double x) {
  switch (kind) {
    case MapKind::Identity: return x;
    case MapKind::Reciprocal:
      if (x == 0.0) throw DomainError("reciprocal map is undefined at x = 0");
      return 1.0 / x;
    case MapKind::JpegScale: return x <= 50.0 ? 5000.0 / x : 200.0 - 2.0 * x;
    case MapKind::LearnedMlp: break;
  }
  throw DomainError("learned map needs its weights; use the ParamMap overload");
}

namespace {

template <typename T>
Tensor<T> scalar_matrix(double v) {
  return Tensor<T>(Shape{1, 1}, static_cast<T>(v));
}

}  // namespace

template <typename T>
MlpH<T> MlpH<T>::init(const ParamDomain& domain, Rng& rng) {
  MlpH m = zeros(domain);
  std::uniform_real_distribution<double> in_weight(0.5, 2.0), in_bias(-1.0, 1.0), out_weight(0.5, 1.5);
  for (std::size_t i = 0; i < hidden; ++i) {
    m.w1[i] = static_cast<T>(in_weight(rng));
    m.b1[i] = static_cast<T>(in_bias(rng));
    m.w2[i] = static_cast<T>(out_weight(rng) / static_cast<double>(hidden));
  }
  return m;
}

template <typename T>
MlpH<T> MlpH<T>::zeros(const ParamDomain& domain) {
  MlpH m;
  m.w1 = Tensor<T>(Shape{hidden, 1});
  m.b1 = Tensor<T>(Shape{hidden, 1});
  m.w2 = Tensor<T>(Shape{1, hidden});
  m.b2 = Tensor<T>(Shape{1, 1});
  m.input_offset = domain.lower();
  m.input_scale = 1.0 / (domain.upper() - domain.lower());
  return m;
}

template <typename T>
double MlpH<T>::operator()(double x) const {
  const auto u = scalar_matrix<T>((x - input_offset) * input_scale);
  return static_cast<double>(mlp_h_forward(w1, b1, w2, b2, u)[0]);
}

template <typename T>
double h_eval(const ParamMap<T>& map, double x) {
  if (map.kind != MapKind::LearnedMlp) return h_eval(map.kind, x);
  if (!map.mlp) throw DomainError("learned map has no weights");
  return (*map.mlp)(x);
}

template <typename T>
double normalize(const ParamDomain& domain, const ParamMap<T>& map, double x) {
  domain.require(x);
  if (map.kind == MapKind::LearnedMlp) {
    if (!map.mlp) throw DomainError("learned map has no weights");
    const auto& m = *map.mlp;
    auto u = [&](double v) { return scalar_matrix<T>((v - m.input_offset) * m.input_scale); };
    return static_cast<double>(
        mlp_normalize(m.w1, m.b1, m.w2, m.b2, u(x), u(domain.lower()), u(domain.upper()))[0]);
  }
  const double h_lower = h_eval(map.kind, domain.lower());
  const double h_upper = h_eval(map.kind, domain.upper());
  if (h_upper == h_lower) throw DomainError("degenerate parameter map: H(x_b) == H(x_a)");
  if (x == domain.lower()) return 0.0;
  if (x == domain.upper()) return 1.0;
  return (h_eval(map.kind, x) - h_lower) / (h_upper - h_lower);
}

namespace {

template <typename T>
void lerp_into(std::span<const T> a, std::span<const T> b, T t, std::span<T> out) {
  if (t == T(0)) {
    std::copy(a.begin(), a.end(), out.begin());
  } else if (t == T(1)) {
    std::copy(b.begin(), b.end(), out.begin());
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::lerp(a[i], b[i], t);
  }
}

// Splits g into ((1 - t) g, t g) so that the two shares add back to g exactly.
// The larger share is g minus the rounded smaller one; it lies within a factor
// of two of g, so subtracting it from g again is exact (Sterbenz) and recovers
// a smaller share that completes the sum without rounding.
template <typename T>
void route_into(std::span<const T> g, T t, Tensor<T>* grad_a, Tensor<T>* grad_b) {
  const bool b_small = t <= T(0.5);
  const T small_weight = b_small ? t : T(1) - t;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T large = g[i] - small_weight * g[i];
    const T small = g[i] - large;
    if (grad_a) (*grad_a)[i] += b_small ? large : small;
    if (grad_b) (*grad_b)[i] += b_small ? small : large;
  }
}

}  // namespace

template <typename T>
Tensor<T> evaluate(const FuncParam<T>& p, double t) {
  if (p.theta_a.shape() != p.theta_b.shape()) {
    throw ShapeError("functional parameter endpoints disagree: " + p.theta_a.shape().to_string() + " vs " +
                     p.theta_b.shape().to_string());
  }
  Tensor<T> out(p.theta_a.shape());
  lerp_into<T>(p.theta_a.data(), p.theta_b.data(), static_cast<T>(t), out.data());
  check_finite(out, "evaluate");
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> route_gradients(const Tensor<T>& grad_w, double t) {
  std::pair<Tensor<T>, Tensor<T>> out{Tensor<T>(grad_w.shape()), Tensor<T>(grad_w.shape())};
  route_into<T>(grad_w.data(), static_cast<T>(t), &out.first, &out.second);
  return out;
}

template <typename T>
FuncParam<T> init_he(const Shape& shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ConfigError("init_he: fan_in must be at least 1");
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  FuncParam<T> p{Tensor<T>(shape), Tensor<T>(shape)};
  for (auto& v : p.theta_a.data()) v = static_cast<T>(normal(rng));
  for (auto& v : p.theta_b.data()) v = static_cast<T>(normal(rng));
  return p;
}

template <typename T>
FuncParam<T> init_constant(const Shape& shape, T value) {
  return FuncParam<T>{Tensor<T>(shape, value), Tensor<T>(shape, value)};
}

template <typename T>
Var<T> evaluate(Var<T> theta_a, Var<T> theta_b, double t) {
  if (theta_a.tape == nullptr || theta_a.tape != theta_b.tape) throw TapeError("evaluate: endpoints on different tapes");
  require_same_shape(theta_a.shape(), theta_b.shape(), "evaluate");
  const T tt = static_cast<T>(t);
  Tensor<T> w(theta_a.shape());
  lerp_into<T>(theta_a.value().data(), theta_b.value().data(), tt, w.data());
  check_finite(w, "evaluate");
  return theta_a.tape->record("evaluate", std::move(w), {theta_a, theta_b},
                              [tt](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
                                route_into<T>(g.data(), tt, d[0], d[1]);
                              });
}

template <typename T>
Var<T> evaluate(Var<T> theta_a, Var<T> theta_b, Var<T> t) {
  if (theta_a.tape == nullptr || theta_a.tape != theta_b.tape || theta_a.tape != t.tape) {
    throw TapeError("evaluate: operands on different tapes");
  }
  require_same_shape(theta_a.shape(), theta_b.shape(), "evaluate");
  if (t.value().size() != 1) throw ShapeError("evaluate: t must be a scalar, got " + t.shape().to_string());
  const T tt = t.value()[0];
  Tensor<T> w(theta_a.shape());
  lerp_into<T>(theta_a.value().data(), theta_b.value().data(), tt, w.data());
  check_finite(w, "evaluate");
  return theta_a.tape->record(
      "evaluate", std::move(w), {theta_a, theta_b, t},
      [theta_a, theta_b, tt](const Tensor<T>& g, std::span<Tensor<T>* const> d) {
        route_into<T>(g.data(), tt, d[0], d[1]);
        if (d[2]) {
          const Tensor<T>& a = theta_a.value();
          const Tensor<T>& b = theta_b.value();
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) {
            acc += static_cast<double>(g[i]) * (static_cast<double>(b[i]) - static_cast<double>(a[i]));
          }
          (*d[2])[0] += static_cast<T>(acc);
        }
      });
}

#define FUNCNET_INSTANTIATE_FUNC_PARAM(T)                                                 \
  template struct MlpH<T>;                                                                \
  template double h_eval(const ParamMap<T>&, double);                                     \
  template double normalize(const ParamDomain&, const ParamMap<T>&, double);              \
  template Tensor<T> evaluate(const FuncParam<T>&, double);                               \
  template std::pair<Tensor<T>, Tensor<T>> route_gradients(const Tensor<T>&, double);     \
  template FuncParam<T> init_he(const Shape&, std::size_t, Rng&);                         \
  template FuncParam<T> init_constant(const Shape&, T);                                   \
  template Var<T> evaluate(Var<T>, Var<T>, double);                                       \
  template Var<T> evaluate(Var<T>, Var<T>, Var<T>);

FUNCNET_INSTANTIATE_FUNC_PARAM(float)
FUNCNET_INSTANTIATE_FUNC_PARAM(double)

#undef FUNCNET_INSTANTIATE_FUNC_PARAM

}  // namespace funcnet
