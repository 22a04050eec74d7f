#include "funcnet/model.hpp"

#include "funcnet/kernels.hpp"

namespace funcnet {

NetworkConfig default_backbone(std::size_t channels, ParamDomain domain, MapKind map, std::size_t width,
                               std::size_t blocks) {
  NetworkConfig c{{}, channels, domain, map, true};
  c.layers.push_back(LayerSpec::conv(channels, width, 3));
  for (std::size_t b = 0; b < blocks; ++b) {
    c.layers.push_back(LayerSpec::residual_begin());
    c.layers.push_back(LayerSpec::conv(width, width, 3));
    c.layers.push_back(LayerSpec::prelu(width));
    c.layers.push_back(LayerSpec::conv(width, width, 3));
    c.layers.push_back(LayerSpec::affine(width));
    c.layers.push_back(LayerSpec::residual_end());
  }
  c.layers.push_back(LayerSpec::conv(width, channels, 3));
  return c;
}

void validate(const NetworkConfig& config) { (void)param_slots(config); }

std::vector<ParamSlot> param_slots(const NetworkConfig& config) {
  if (config.input_channels == 0) throw ConfigError("network input_channels must be positive");
  std::vector<ParamSlot> slots;
  std::vector<std::size_t> open;
  std::size_t ch = config.input_channels;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    auto fail = [&](const std::string& what) { throw ConfigError("layer " + std::to_string(i) + ": " + what); };
    switch (l.kind) {
      case LayerKind::Conv:
        if (l.in_ch != ch) fail("conv expects " + std::to_string(l.in_ch) + " channels, gets " + std::to_string(ch));
        if (l.out_ch == 0) fail("conv needs at least one output channel");
        if (l.k == 0 || l.k % 2 == 0) fail("conv kernel size must be odd");
        slots.push_back({i, ParamRole::ConvKernel, Shape{l.out_ch, l.in_ch, l.k, l.k}, l.in_ch * l.k * l.k,
                         prefix + "kernel"});
        slots.push_back({i, ParamRole::ConvBias, Shape{l.out_ch}, 1, prefix + "bias"});
        ch = l.out_ch;
        break;
      case LayerKind::PReLU:
        if (l.ch != ch) fail("prelu width " + std::to_string(l.ch) + " does not match " + std::to_string(ch));
        slots.push_back({i, ParamRole::PReluSlope, Shape{l.ch}, 1, prefix + "slope"});
        break;
      case LayerKind::ChannelAffine:
        if (l.ch != ch) fail("affine width " + std::to_string(l.ch) + " does not match " + std::to_string(ch));
        slots.push_back({i, ParamRole::AffineScale, Shape{l.ch}, 1, prefix + "scale"});
        slots.push_back({i, ParamRole::AffineShift, Shape{l.ch}, 1, prefix + "shift"});
        break;
      case LayerKind::ResidualBegin:
        open.push_back(ch);
        break;
      case LayerKind::ResidualEnd:
        if (open.empty()) fail("residual end without a matching begin");
        if (open.back() != ch) fail("residual skip joins " + std::to_string(open.back()) + " and " +
                                    std::to_string(ch) + " channels");
        open.pop_back();
        break;
      case LayerKind::GlobalSkipAdd:
        if (ch != config.input_channels) fail("global skip needs " + std::to_string(config.input_channels) +
                                              " channels, gets " + std::to_string(ch));
        break;
    }
  }
  if (!open.empty()) throw ConfigError("unbalanced residual block: missing residual end");
  if (config.residual_output && ch != config.input_channels) {
    throw ConfigError("residual output needs " + std::to_string(config.input_channels) + " output channels, network emits " +
                      std::to_string(ch));
  }
  return slots;
}

namespace {

template <typename T>
T constant_init(ParamRole role) {
  switch (role) {
    case ParamRole::PReluSlope: return T(0.25);
    case ParamRole::AffineScale: return T(1);
    default: return T(0);
  }
}

}  // namespace

template <typename T>
FuncNetwork<T> build(const NetworkConfig& config, Rng& rng) {
  FuncNetwork<T> net{config, {}, std::nullopt};
  for (const auto& slot : param_slots(config)) {
    if (slot.role == ParamRole::ConvKernel) {
      net.params.push_back(init_he<T>(slot.shape, slot.fan_in, rng));
    } else {
      net.params.push_back(init_constant<T>(slot.shape, constant_init<T>(slot.role)));
    }
  }
  if (config.map == MapKind::LearnedMlp) net.mlp = MlpH<T>::init(config.domain, rng);
  return net;
}

template <typename T>
PlainNetwork<T> build_plain(const NetworkConfig& config, Rng& rng) {
  PlainNetwork<T> net{config, {}};
  for (const auto& slot : param_slots(config)) {
    if (slot.role == ParamRole::ConvKernel) {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(slot.fan_in)));
      Tensor<T> w(slot.shape);
      for (auto& v : w.data()) v = static_cast<T>(normal(rng));
      net.weights.push_back(std::move(w));
    } else {
      net.weights.emplace_back(slot.shape, constant_init<T>(slot.role));
    }
  }
  return net;
}

template <typename T>
std::size_t param_count(const FuncNetwork<T>& net) {
  std::size_t n = 0;
  for (const auto& p : net.params) n += p.scalar_count();
  return n;
}

template <typename T>
std::size_t param_count(const PlainNetwork<T>& net) {
  std::size_t n = 0;
  for (const auto& w : net.weights) n += w.size();
  return n;
}

template <typename T>
double normalized_level(const FuncNetwork<T>& net, double x) {
  return normalize(net.config.domain, net.param_map(), x);
}

template <typename T>
PlainNetwork<T> materialize(const FuncNetwork<T>& net, double x) {
  const double t = normalized_level(net, x);
  PlainNetwork<T> plain{net.config, {}};
  plain.weights.reserve(net.params.size());
  for (const auto& p : net.params) plain.weights.push_back(evaluate(p, t));
  return plain;
}

template <typename T>
Tensor<T> forward_plain(const PlainNetwork<T>& net, const Tensor<T>& input) {
  if (input.shape().rank() != 4 || input.shape()[1] != net.config.input_channels) {
    throw ShapeError("network expects [N," + std::to_string(net.config.input_channels) + ",H,W] input, got " +
                     input.shape().to_string());
  }
  if (net.weights.size() != param_slots(net.config).size()) throw ShapeError("plain network weight count mismatch");
  return run_layers<Tensor<T>>(net.config, net.weights, input);
}

template <typename T>
Tensor<T> forward(const FuncNetwork<T>& net, double x, const Tensor<T>& input) {
  if (input.shape().rank() != 4 || input.shape()[1] != net.config.input_channels) {
    throw ShapeError("network expects [N," + std::to_string(net.config.input_channels) + ",H,W] input, got " +
                     input.shape().to_string());
  }
  Tape<T> tape;
  const auto leaves = attach(tape, net, false);
  const auto weights = weights_at(net, leaves, x);
  const Var<T> in = tape.constant(input);
  return run_layers<Var<T>>(net.config, weights, in).value();
}

template <typename T>
FuncLeaves<T> attach(Tape<T>& tape, const FuncNetwork<T>& net, bool requires_grad) {
  FuncLeaves<T> leaves;
  for (const auto& p : net.params) {
    leaves.theta_a.push_back(tape.leaf(p.theta_a, requires_grad));
    leaves.theta_b.push_back(tape.leaf(p.theta_b, requires_grad));
  }
  if (net.mlp) {
    for (const auto* t : {&net.mlp->w1, &net.mlp->b1, &net.mlp->w2, &net.mlp->b2}) {
      leaves.mlp.push_back(tape.leaf(*t, requires_grad));
    }
  }
  return leaves;
}

template <typename T>
std::vector<Var<T>> attach(Tape<T>& tape, const PlainNetwork<T>& net, bool requires_grad) {
  std::vector<Var<T>> leaves;
  for (const auto& w : net.weights) leaves.push_back(tape.leaf(w, requires_grad));
  return leaves;
}

template <typename T>
std::vector<Var<T>> weights_at(const FuncNetwork<T>& net, const FuncLeaves<T>& leaves, double x) {
  net.config.domain.require(x);
  std::vector<Var<T>> weights;
  weights.reserve(net.params.size());
  if (net.config.map == MapKind::LearnedMlp) {
    if (!net.mlp || leaves.mlp.size() != 4) throw DomainError("learned map has no weights");
    auto& tape = *leaves.mlp[0].tape;
    const auto& m = *net.mlp;
    auto u = [&](double v) {
      return tape.constant(Tensor<T>(Shape{1, 1}, static_cast<T>((v - m.input_offset) * m.input_scale)));
    };
    const Var<T> t = mlp_normalize(leaves.mlp[0], leaves.mlp[1], leaves.mlp[2], leaves.mlp[3], u(x),
                                   u(net.config.domain.lower()), u(net.config.domain.upper()));
    for (std::size_t i = 0; i < net.params.size(); ++i) weights.push_back(evaluate(leaves.theta_a[i], leaves.theta_b[i], t));
    return weights;
  }
  const double t = normalized_level(net, x);
  for (std::size_t i = 0; i < net.params.size(); ++i) weights.push_back(evaluate(leaves.theta_a[i], leaves.theta_b[i], t));
  return weights;
}

std::size_t forward_macs(const NetworkConfig& config, std::size_t n, std::size_t h, std::size_t w) {
  std::size_t macs = 0;
  for (const auto& l : config.layers) {
    if (l.kind == LayerKind::Conv) macs += conv2d_macs(n, l.in_ch, l.out_ch, l.k, h, w);
  }
  return macs;
}

#define FUNCNET_INSTANTIATE_MODEL(T)                                                                 \
  template FuncNetwork<T> build(const NetworkConfig&, Rng&);                                         \
  template PlainNetwork<T> build_plain(const NetworkConfig&, Rng&);                                  \
  template std::size_t param_count(const FuncNetwork<T>&);                                           \
  template std::size_t param_count(const PlainNetwork<T>&);                                          \
  template double normalized_level(const FuncNetwork<T>&, double);                                   \
  template PlainNetwork<T> materialize(const FuncNetwork<T>&, double);                               \
  template Tensor<T> forward_plain(const PlainNetwork<T>&, const Tensor<T>&);                        \
  template Tensor<T> forward(const FuncNetwork<T>&, double, const Tensor<T>&);                       \
  template FuncLeaves<T> attach(Tape<T>&, const FuncNetwork<T>&, bool);                              \
  template std::vector<Var<T>> attach(Tape<T>&, const PlainNetwork<T>&, bool);                       \
  template std::vector<Var<T>> weights_at(const FuncNetwork<T>&, const FuncLeaves<T>&, double);

FUNCNET_INSTANTIATE_MODEL(float)
FUNCNET_INSTANTIATE_MODEL(double)

#undef FUNCNET_INSTANTIATE_MODEL

}  // namespace funcnet
