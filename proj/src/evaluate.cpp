#include "funcnet/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "funcnet/errors.hpp"
#include "funcnet/kernels.hpp"
#include "funcnet/parallel.hpp"
#include "funcnet/train.hpp"

namespace funcnet {

double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak) {
  if (!a.same_shape(b)) throw ShapeError("psnr: images differ in shape");
  if (!(peak > 0.0)) throw DomainError("psnr: peak must be positive");
  if (a.values.empty()) throw ShapeError("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    se += d * d;
  }
  if (se == 0.0) return kInfinitePsnr;
  const double mse = se / static_cast<double>(a.values.size());
  return 10.0 * std::log10(peak * peak / mse);
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

ImageBuffer degrade_for_eval(const ImageBuffer& img, Task task, double x, std::uint64_t seed, std::size_t index) {
  Rng rng = stream_rng({seed, stream_tag::eval, index});
  return degrade(img, DegradationSpec{task, x}, rng);
}

TensorF self_ensemble(const PlainNetwork<float>& net, const TensorF& input) {
  TensorF acc;
  for (int code = 0; code < 8; ++code) {
    const TensorF out = dihedral(forward_plain(net, dihedral(input, code)), dihedral_inverse(code));
    acc = code == 0 ? out : add(acc, out);
  }
  return mul_scalar(acc, 0.125f);
}

ImageBuffer restore(const PlainNetwork<float>& net, const ImageBuffer& degraded, bool ensemble) {
  const TensorF in = degraded.to_tensor();
  return clamped(ImageBuffer::from_tensor(ensemble ? self_ensemble(net, in) : forward_plain(net, in)));
}

double evaluate_at(const Model& model, std::span<const ImageBuffer> images, Task task, double x,
                   const EvalOptions& options) {
  if (images.empty()) throw DataError("evaluation needs at least one image");
  const PlainNetwork<float> net = weights_for(model, x);
  std::vector<double> scores(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    scores[i] = psnr(restore(net, degrade_for_eval(images[i], task, x, options.seed, i), options.ensemble), images[i]);
  });
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

double degraded_baseline(std::span<const ImageBuffer> images, Task task, double x, std::uint64_t seed) {
  if (images.empty()) throw DataError("evaluation needs at least one image");
  double sum = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) sum += psnr(degrade_for_eval(images[i], task, x, seed, i), images[i]);
  return sum / static_cast<double>(images.size());
}

std::string SweepReport::to_csv() const {
  std::string out = "parameter,psnr_db,images\n";
  for (const auto& r : rows) out += format_number(r.x) + "," + format_number(r.psnr) + "," + std::to_string(r.count) + "\n";
  return out;
}

SweepReport sweep(const Model& model, std::span<const ImageBuffer> images, Task task, std::span<const double> xs,
                  const EvalOptions& options) {
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] > xs[i - 1])) throw ConfigError("sweep values must be strictly increasing");
  }
  for (double x : xs) model.config().domain.require(x);
  SweepReport report;
  for (double x : xs) report.rows.push_back({x, evaluate_at(model, images, task, x, options), images.size()});
  return report;
}

std::vector<double> parse_grid(std::string_view spec) {
  auto number = [&](std::string_view s) {
    try {
      std::size_t used = 0;
      const std::string str(s);
      const double v = std::stod(str, &used);
      if (used != str.size()) throw std::invalid_argument(str);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("malformed grid '" + std::string(spec) + "'");
    }
  };
  std::vector<double> out;
  if (spec.find(':') != std::string_view::npos) {
    const auto c1 = spec.find(':'), c2 = spec.find(':', c1 + 1);
    if (c2 == std::string_view::npos) throw ConfigError("grid '" + std::string(spec) + "' must be start:stop:step");
    const double a = number(spec.substr(0, c1)), b = number(spec.substr(c1 + 1, c2 - c1 - 1));
    const double step = number(spec.substr(c2 + 1));
    if (!(step > 0.0) || b < a) throw ConfigError("grid '" + std::string(spec) + "' needs step > 0 and stop >= start");
    const auto count = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) out.push_back(a + static_cast<double>(i) * step);
  } else {
    std::size_t start = 0;
    while (start <= spec.size()) {
      const auto comma = spec.find(',', start);
      const auto end = comma == std::string_view::npos ? spec.size() : comma;
      out.push_back(number(spec.substr(start, end - start)));
      start = end + 1;
    }
  }
  return out;
}

std::vector<double> default_sweep_grid(Task task) {
  return task == Task::Denoise ? std::vector<double>{5, 15, 25, 35, 50, 75} : std::vector<double>{10, 20, 30, 40};
}

KernelGrid kernel_grid(const Model& model, std::size_t layer, std::size_t channel, std::span<const double> xs,
                       std::size_t input_channel) {
  const auto& layers = model.config().layers;
  if (layer >= layers.size() || layers[layer].kind != LayerKind::Conv) {
    throw ConfigError("layer " + std::to_string(layer) + " is not a convolution");
  }
  const auto& spec = layers[layer];
  if (channel >= spec.out_ch) throw ConfigError("output channel " + std::to_string(channel) + " out of range");
  if (input_channel >= spec.in_ch) throw ConfigError("input channel " + std::to_string(input_channel) + " out of range");
  const auto slots = param_slots(model.config());
  std::size_t slot = 0;
  while (!(slots[slot].layer == layer && slots[slot].role == ParamRole::ConvKernel)) ++slot;

  KernelGrid grid{layer, channel, input_channel, {}};
  const std::size_t k = spec.k;
  for (double x : xs) {
    const PlainNetwork<float> net = weights_for(model, x);
    const TensorF& w = net.weights[slot];
    KernelSlice s{x, TensorF(Shape{k, k}), 0.0};
    double sq = 0.0;
    for (std::size_t i = 0; i < k * k; ++i) {
      s.kernel[i] = w[(channel * spec.in_ch + input_channel) * k * k + i];
      sq += static_cast<double>(s.kernel[i]) * s.kernel[i];
    }
    s.l2 = std::sqrt(sq);
    grid.slices.push_back(std::move(s));
  }
  return grid;
}

std::string kernel_csv(const KernelGrid& grid) {
  std::string out = "parameter,l2_norm,row,col,value\n";
  for (const auto& s : grid.slices) {
    const std::size_t k = s.kernel.shape()[0];
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < k; ++c) {
        out += format_number(s.x) + "," + format_number(s.l2) + "," + std::to_string(r) + "," + std::to_string(c) +
               "," + format_number(s.kernel[r * k + c]) + "\n";
      }
  }
  return out;
}

ImageBuffer kernel_montage(const KernelGrid& grid, std::size_t pad) {
  if (grid.slices.empty()) throw ConfigError("kernel montage needs at least one slice");
  const std::size_t k = grid.slices[0].kernel.shape()[0], n = grid.slices.size();
  ImageBuffer img(k, n * k + (n - 1) * pad, 1);
  for (std::size_t s = 0; s < n; ++s) {
    const auto v = grid.slices[s].kernel.data();
    const float lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < k; ++c) {
        const float val = v[r * k + c];
        img.at(0, r, s * (k + pad) + c) = hi > lo ? (val - lo) / (hi - lo) : 0.0f;
      }
  }
  return img;
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::FuncNet: return "funcnet";
    case Variant::Plain: return "plain";
    case Variant::IdentityH: return "identity_h";
    case Variant::MlpH: return "mlp_h";
  }
  return "unknown";
}

Variant variant_from_string(std::string_view name) {
  for (auto v : {Variant::FuncNet, Variant::Plain, Variant::IdentityH, Variant::MlpH}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected funcnet, plain, identity_h, mlp_h)");
}

RunConfig variant_config(const RunConfig& base, Variant v) {
  RunConfig c = base;
  c.map.reset();
  c.model = ModelKind::FuncNet;
  switch (v) {
    case Variant::FuncNet: break;
    case Variant::Plain: c.model = ModelKind::Plain; break;
    case Variant::IdentityH: c.map = MapKind::Identity; break;
    case Variant::MlpH: c.map = MapKind::LearnedMlp; break;
  }
  // A map equal to the task default is the FuncNet configuration itself.
  if (c.map && *c.map == task_map(c.train.task)) c.map.reset();
  const Variant stored = c.model == ModelKind::Plain ? Variant::Plain : c.map ? v : Variant::FuncNet;
  c.output.dir = base.output.dir / std::string(to_string(stored));
  return c;
}

std::string AblationReport::to_csv() const {
  std::string out = "variant,parameter,psnr_db\n";
  for (const auto& r : rows) out += std::string(to_string(r.variant)) + "," + format_number(r.x) + "," + format_number(r.psnr) + "\n";
  return out;
}

double AblationReport::mean(Variant v) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.variant == v) {
      sum += r.psnr;
      ++n;
    }
  }
  if (n == 0) throw ConfigError("no ablation rows for " + std::string(to_string(v)));
  return sum / static_cast<double>(n);
}

AblationReport ablate(const RunConfig& base, std::span<const Variant> variants, const EvalOptions& options) {
  const TrainData data = load_train_data(base);
  AblationReport report;
  for (Variant v : variants) {
    const RunConfig c = variant_config(base, v);
    const Checkpoint ckpt = train_loop(c, data);
    for (double x : probe_levels(base.train.task)) {
      report.rows.push_back({v, x, evaluate_at(ckpt.model, data.val, base.train.task, x, options)});
    }
  }
  return report;
}

}  // namespace funcnet
