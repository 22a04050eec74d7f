#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "funcnet/func_param.hpp"
#include "funcnet/image.hpp"
#include "funcnet/rng.hpp"
#include "funcnet/tensor.hpp"

namespace funcnet {

enum class Task { Denoise, Deblock };

[[nodiscard]] std::string_view to_string(Task task);
/// Accepts "denoise" and "deblock".
[[nodiscard]] Task task_from_string(std::string_view name);

/// Support bounds used by the functional parameters: [0,75] for sigma, [10,80] for quality.
[[nodiscard]] ParamDomain task_domain(Task task);
/// Identity for denoising, the JPEG quality-to-scale map for deblocking.
[[nodiscard]] MapKind task_map(Task task);
/// RGB for denoising, luma for deblocking.
[[nodiscard]] std::size_t task_channels(Task task);

struct DegradationSpec {
  Task task = Task::Denoise;
  double parameter = 0.0;  // sigma on the 0-255 scale, or JPEG quality

  /// sigma in (0,75]; quality in [10,80].
  void validate() const;
};

/// img + N(0, (sigma/255)^2) per sample, unclamped.
ImageBuffer add_awgn(const ImageBuffer& img, double sigma, Rng& rng);
void add_awgn(std::span<float> values, double sigma, Rng& rng);

/// Standard JPEG luminance quantization table, row-major 8x8.
[[nodiscard]] const std::array<int, 64>& standard_luma_table();
/// clamp(floor((Q * S + 50) / 100), 1, 255) with S = H(quality).
[[nodiscard]] std::array<int, 64> scaled_quant_table(double quality);

/// Transform-domain JPEG simulation on a grayscale image: 8x8 orthonormal DCT-II on
/// level-shifted 0-255 values, coefficient quantization with the scaled table,
/// inverse DCT, clamp to [0,1]. Sizes that are not multiples of 8 are reflect-padded
/// and cropped back.
ImageBuffer jpeg_degrade(const ImageBuffer& img, double quality);

/// Degrades with the task's model; `rng` feeds the noise for denoising.
ImageBuffer degrade(const ImageBuffer& img, const DegradationSpec& spec, Rng& rng);

/// Denoise: uniform on (0,75]. Deblock: uniform over {10,12,...,80}.
double sample_parameter(Task task, Rng& rng);

struct PatchOrigin {
  std::size_t image = 0;
  std::size_t y = 0;
  std::size_t x = 0;
};

/// Uniform image index and top-left corner; snapped to multiples of 8 when align8.
PatchOrigin sample_origin(std::span<const ImageBuffer> images, std::size_t patch, bool align8, Rng& rng);
/// Copies a patch×patch crop into sample `n` of `dst` ([N,C,patch,patch]).
void copy_patch(const ImageBuffer& img, const PatchOrigin& origin, std::size_t patch, TensorF& dst, std::size_t n);

struct PatchBatch {
  TensorF clean;
  TensorF degraded;
  std::vector<double> parameters;
  std::vector<PatchOrigin> origins;
};

/// Clean patches only; degradation is applied per sample by the caller.
PatchBatch sample_patches(std::span<const ImageBuffer> images, std::size_t patch, std::size_t batch_n, bool align8,
                          Rng& rng);

/// Dihedral group element on [N,C,H,W]: 0 identity, 1-3 rotations by 90/180/270
/// degrees counter-clockwise, 4 horizontal flip, 5 vertical flip, 6 transpose,
/// 7 anti-transpose. Codes 1, 3, 6, 7 swap H and W.
TensorF dihedral(const TensorF& x, int code);
[[nodiscard]] int dihedral_inverse(int code);
/// dihedral() restricted to square spatial size for the axis-swapping codes.
TensorF augment(const TensorF& patch, int code);

}  // namespace funcnet
