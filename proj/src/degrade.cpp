#include "funcnet/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace funcnet {

std::string_view to_string(Task task) { return task == Task::Denoise ? "denoise" : "deblock"; }

Task task_from_string(std::string_view name) {
  if (name == "denoise") return Task::Denoise;
  if (name == "deblock") return Task::Deblock;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected denoise or deblock)");
}

ParamDomain task_domain(Task task) {
  return task == Task::Denoise ? ParamDomain(0.0, 75.0) : ParamDomain(10.0, 80.0);
}

MapKind task_map(Task task) { return task == Task::Denoise ? MapKind::Identity : MapKind::JpegScale; }

std::size_t task_channels(Task task) { return task == Task::Denoise ? 3 : 1; }

void DegradationSpec::validate() const {
  std::ostringstream os;
  if (task == Task::Denoise && !(parameter > 0.0 && parameter <= 75.0)) {
    os << "noise level " << parameter << " outside (0,75]";
    throw DomainError(os.str());
  }
  if (task == Task::Deblock && !(parameter >= 10.0 && parameter <= 80.0)) {
    os << "JPEG quality " << parameter << " outside [10,80]";
    throw DomainError(os.str());
  }
}

void add_awgn(std::span<float> values, double sigma, Rng& rng) {
  if (sigma < 0.0) throw DomainError("noise level must be non-negative");
  if (sigma == 0.0) return;
  std::normal_distribution<double> noise(0.0, sigma / 255.0);
  for (auto& v : values) v = static_cast<float>(static_cast<double>(v) + noise(rng));
}

ImageBuffer add_awgn(const ImageBuffer& img, double sigma, Rng& rng) {
  ImageBuffer out = img;
  add_awgn(out.values, sigma, rng);
  return out;
}

const std::array<int, 64>& standard_luma_table() {
  static const std::array<int, 64> table = {
      16, 11, 10, 16, 24,  40,  51,  61,   //
      12, 12, 14, 19, 26,  58,  60,  55,   //
      14, 13, 16, 24, 40,  57,  69,  56,   //
      14, 17, 22, 29, 51,  87,  80,  62,   //
      18, 22, 37, 56, 68,  109, 103, 77,   //
      24, 35, 55, 64, 81,  104, 113, 92,   //
      49, 64, 78, 87, 103, 121, 120, 101,  //
      72, 92, 95, 98, 112, 100, 103, 99};
  return table;
}

std::array<int, 64> scaled_quant_table(double quality) {
  if (!(quality >= 10.0 && quality <= 80.0)) {
    std::ostringstream os;
    os << "JPEG quality " << quality << " outside [10,80]";
    throw DomainError(os.str());
  }
  const double scale = h_eval(MapKind::JpegScale, quality);
  std::array<int, 64> q{};
  const auto& base = standard_luma_table();
  for (std::size_t i = 0; i < 64; ++i) {
    const double v = std::floor((base[i] * scale + 50.0) / 100.0);
    q[i] = static_cast<int>(std::clamp(v, 1.0, 255.0));
  }
  return q;
}

namespace {

// Orthonormal DCT-II basis: basis[u][x] = alpha(u) cos((2x+1) u pi / 16).
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) b[u][x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return b;
  }();
  return basis;
}

using Block = std::array<std::array<double, 8>, 8>;

// out = basis * in * basis^T (forward) or basis^T * in * basis (inverse).
Block transform(const Block& in, bool inverse) {
  const auto& b = dct_basis();
  Block tmp{}, out{};
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += (inverse ? b[k][i] : b[i][k]) * in[k][j];
      tmp[i][j] = acc;
    }
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += tmp[i][k] * (inverse ? b[k][j] : b[j][k]);
      out[i][j] = acc;
    }
  return out;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(n) ? i : period - i);
}

}  // namespace

ImageBuffer jpeg_degrade(const ImageBuffer& img, double quality) {
  if (img.channels != 1) throw DataError("jpeg_degrade expects a grayscale image");
  const auto q = scaled_quant_table(quality);
  const std::size_t ph = (img.height + 7) / 8 * 8, pw = (img.width + 7) / 8 * 8;
  ImageBuffer out(img.height, img.width, 1);
  Block block{};
  for (std::size_t by = 0; by < ph; by += 8) {
    for (std::size_t bx = 0; bx < pw; bx += 8) {
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(by + y), img.height);
          const std::size_t sx = reflect_index(static_cast<std::ptrdiff_t>(bx + x), img.width);
          block[y][x] = static_cast<double>(img.at(0, sy, sx)) * 255.0 - 128.0;
        }
      Block coeff = transform(block, false);
      for (std::size_t u = 0; u < 8; ++u)
        for (std::size_t v = 0; v < 8; ++v) {
          const double step = q[u * 8 + v];
          coeff[u][v] = std::round(coeff[u][v] / step) * step;
        }
      const Block rec = transform(coeff, true);
      for (std::size_t y = 0; y < 8 && by + y < img.height; ++y)
        for (std::size_t x = 0; x < 8 && bx + x < img.width; ++x) {
          const double v = (rec[y][x] + 128.0) / 255.0;
          out.at(0, by + y, bx + x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
  }
  return out;
}

ImageBuffer degrade(const ImageBuffer& img, const DegradationSpec& spec, Rng& rng) {
  if (spec.task == Task::Denoise) return add_awgn(img, spec.parameter, rng);
  return jpeg_degrade(img, spec.parameter);
}

double sample_parameter(Task task, Rng& rng) {
  if (task == Task::Denoise) {
    // 1 - U[0,1) lies in (0,1]
    const double u = std::generate_canonical<double, 53>(rng);
    return 75.0 * (1.0 - u);
  }
  std::uniform_int_distribution<int> step(0, 35);
  return 10.0 + 2.0 * step(rng);
}

PatchOrigin sample_origin(std::span<const ImageBuffer> images, std::size_t patch, bool align8, Rng& rng) {
  if (images.empty()) throw DataError("no images to sample patches from");
  if (align8 && patch % 8 != 0) throw ConfigError("aligned patches must have a size divisible by 8");
  std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
  PatchOrigin o;
  o.image = pick(rng);
  const auto& img = images[o.image];
  if (img.height < patch || img.width < patch) {
    throw DataError("image " + std::to_string(o.image) + " (" + std::to_string(img.height) + "x" +
                    std::to_string(img.width) + ") is smaller than the " + std::to_string(patch) + " patch");
  }
  const std::size_t step = align8 ? 8 : 1;
  std::uniform_int_distribution<std::size_t> oy(0, (img.height - patch) / step), ox(0, (img.width - patch) / step);
  o.y = oy(rng) * step;
  o.x = ox(rng) * step;
  return o;
}

void copy_patch(const ImageBuffer& img, const PatchOrigin& origin, std::size_t patch, TensorF& dst, std::size_t n) {
  const std::size_t c = img.channels;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < patch; ++y)
      for (std::size_t x = 0; x < patch; ++x) dst.at(n, ch, y, x) = img.at(ch, origin.y + y, origin.x + x);
}

PatchBatch sample_patches(std::span<const ImageBuffer> images, std::size_t patch, std::size_t batch_n, bool align8,
                          Rng& rng) {
  if (images.empty()) throw DataError("no images to sample patches from");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height < patch || images[i].width < patch) {
      throw DataError("image " + std::to_string(i) + " is smaller than the " + std::to_string(patch) + " patch");
    }
  }
  PatchBatch batch;
  batch.clean = TensorF(Shape{batch_n, images[0].channels, patch, patch});
  for (std::size_t n = 0; n < batch_n; ++n) {
    const auto o = sample_origin(images, patch, align8, rng);
    if (images[o.image].channels != images[0].channels) throw DataError("images in a batch must share a channel count");
    copy_patch(images[o.image], o, patch, batch.clean, n);
    batch.origins.push_back(o);
  }
  return batch;
}

TensorF dihedral(const TensorF& x, int code) {
  if (code < 0 || code > 7) throw ConfigError("dihedral code must be in [0,8)");
  if (x.shape().rank() != 4) throw ShapeError("dihedral expects [N,C,H,W], got " + x.shape().to_string());
  const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const bool swap = code == 1 || code == 3 || code == 6 || code == 7;
  const std::size_t oh = swap ? w : h, ow = swap ? h : w;
  TensorF out(Shape{n, c, oh, ow});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          std::size_t si = i, sj = j;
          switch (code) {
            case 1: si = j; sj = w - 1 - i; break;
            case 2: si = h - 1 - i; sj = w - 1 - j; break;
            case 3: si = h - 1 - j; sj = i; break;
            case 4: sj = w - 1 - j; break;
            case 5: si = h - 1 - i; break;
            case 6: si = j; sj = i; break;
            case 7: si = h - 1 - j; sj = w - 1 - i; break;
            default: break;
          }
          out.at(s, ch, i, j) = x.at(s, ch, si, sj);
        }
  return out;
}

int dihedral_inverse(int code) {
  if (code == 1) return 3;
  if (code == 3) return 1;
  return code;
}

TensorF augment(const TensorF& patch, int code) {
  const bool swap = code == 1 || code == 3 || code == 6 || code == 7;
  if (swap && patch.shape().rank() == 4 && patch.shape()[2] != patch.shape()[3]) {
    throw ShapeError("augment: rotation codes need a square patch, got " + patch.shape().to_string());
  }
  return dihedral(patch, code);
}

}  // namespace funcnet
