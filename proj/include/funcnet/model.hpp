#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "funcnet/autodiff.hpp"
#include "funcnet/func_param.hpp"
#include "funcnet/rng.hpp"

namespace funcnet {

enum class LayerKind { Conv, PReLU, ChannelAffine, ResidualBegin, ResidualEnd, GlobalSkipAdd };

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::size_t in_ch = 0;   // Conv
  std::size_t out_ch = 0;  // Conv
  std::size_t k = 0;       // Conv
  std::size_t ch = 0;      // PReLU, ChannelAffine

  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t k) { return {LayerKind::Conv, in, out, k, 0}; }
  static LayerSpec prelu(std::size_t ch) { return {LayerKind::PReLU, 0, 0, 0, ch}; }
  static LayerSpec affine(std::size_t ch) { return {LayerKind::ChannelAffine, 0, 0, 0, ch}; }
  static LayerSpec residual_begin() { return {LayerKind::ResidualBegin}; }
  static LayerSpec residual_end() { return {LayerKind::ResidualEnd}; }
  static LayerSpec global_skip() { return {LayerKind::GlobalSkipAdd}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkConfig {
  std::vector<LayerSpec> layers;
  std::size_t input_channels = 1;
  ParamDomain domain{0.0, 1.0};
  MapKind map = MapKind::Identity;
  bool residual_output = true;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Head conv, `blocks` residual blocks [conv, PReLU, conv, affine, skip], tail conv,
/// global residual to the input.
NetworkConfig default_backbone(std::size_t channels, ParamDomain domain, MapKind map, std::size_t width = 32,
                               std::size_t blocks = 3);

enum class ParamRole { ConvKernel, ConvBias, PReluSlope, AffineScale, AffineShift };

/// One trainable tensor of a network, in layer order.
struct ParamSlot {
  std::size_t layer;
  ParamRole role;
  Shape shape;
  std::size_t fan_in;
  std::string name;
};

/// Checks the channel chain and residual nesting; throws ConfigError on violation.
void validate(const NetworkConfig& config);
std::vector<ParamSlot> param_slots(const NetworkConfig& config);

/// Network whose every trainable tensor is a FuncParam.
template <typename T>
struct FuncNetwork {
  NetworkConfig config;
  std::vector<FuncParam<T>> params;
  std::optional<MlpH<T>> mlp;  // present iff config.map == LearnedMlp

  [[nodiscard]] ParamMap<T> param_map() const { return ParamMap<T>{config.map, mlp}; }
};

/// Network with fixed numeric weights.
template <typename T>
struct PlainNetwork {
  NetworkConfig config;
  std::vector<Tensor<T>> weights;
};

template <typename T>
FuncNetwork<T> build(const NetworkConfig& config, Rng& rng);

/// Conventional network with the same architecture and initialization rules.
template <typename T>
PlainNetwork<T> build_plain(const NetworkConfig& config, Rng& rng);

/// Stored scalars: both endpoints of every FuncParam (learned-H weights excluded).
template <typename T>
std::size_t param_count(const FuncNetwork<T>& net);
template <typename T>
std::size_t param_count(const PlainNetwork<T>& net);

/// t for parameter value x under the network's domain and map.
template <typename T>
double normalized_level(const FuncNetwork<T>& net, double x);

template <typename T>
PlainNetwork<T> materialize(const FuncNetwork<T>& net, double x);

template <typename T>
Tensor<T> forward_plain(const PlainNetwork<T>& net, const Tensor<T>& input);

/// Forward pass through the differentiable path, returning values only.
template <typename T>
Tensor<T> forward(const FuncNetwork<T>& net, double x, const Tensor<T>& input);

/// Tape handles for every stored tensor of a FuncNetwork.
template <typename T>
struct FuncLeaves {
  std::vector<Var<T>> theta_a;
  std::vector<Var<T>> theta_b;
  std::vector<Var<T>> mlp;  // w1, b1, w2, b2 when the map is learned
};

template <typename T>
FuncLeaves<T> attach(Tape<T>& tape, const FuncNetwork<T>& net, bool requires_grad = true);
template <typename T>
std::vector<Var<T>> attach(Tape<T>& tape, const PlainNetwork<T>& net, bool requires_grad = true);

/// Records evaluation of every FuncParam at x; t is differentiable for a learned map.
template <typename T>
std::vector<Var<T>> weights_at(const FuncNetwork<T>& net, const FuncLeaves<T>& leaves, double x);

/// Runs the layer sequence on plain tensors or tape variables.
template <typename V>
V run_layers(const NetworkConfig& config, std::span<const V> weights, const V& input) {
  std::vector<V> skips;
  V x = input;
  std::size_t w = 0;
  for (const auto& layer : config.layers) {
    switch (layer.kind) {
      case LayerKind::Conv:
        x = conv2d(x, weights[w], weights[w + 1]);
        w += 2;
        break;
      case LayerKind::PReLU:
        x = prelu(x, weights[w]);
        w += 1;
        break;
      case LayerKind::ChannelAffine:
        x = channel_affine(x, weights[w], weights[w + 1]);
        w += 2;
        break;
      case LayerKind::ResidualBegin:
        skips.push_back(x);
        break;
      case LayerKind::ResidualEnd:
        x = add(x, skips.back());
        skips.pop_back();
        break;
      case LayerKind::GlobalSkipAdd:
        x = add(x, input);
        break;
    }
  }
  if (config.residual_output) x = add(x, input);
  return x;
}

/// Multiply-accumulates of the conv layers for one forward pass on [n, C, h, w].
std::size_t forward_macs(const NetworkConfig& config, std::size_t n, std::size_t h, std::size_t w);

}  // namespace funcnet
