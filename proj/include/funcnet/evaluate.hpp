#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "funcnet/checkpoint.hpp"
#include "funcnet/degrade.hpp"
#include "funcnet/image.hpp"

namespace funcnet {

/// Written in place of +inf when two images are identical.
inline constexpr double kInfinitePsnr = 999.0;
inline constexpr std::uint64_t kEvalSeed = 20170401;

/// 10 log10(peak^2 / MSE), or kInfinitePsnr when MSE is zero.
double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak = 1.0);

/// "%.9g", so reports are byte-stable.
std::string format_number(double v);

struct EvalOptions {
  bool ensemble = false;
  std::uint64_t seed = kEvalSeed;
};

/// Degraded copy of validation image `index`. Noise is drawn from a stream keyed by
/// (seed, index), so every parameter level sees the same standard-normal realization.
ImageBuffer degrade_for_eval(const ImageBuffer& img, Task task, double x, std::uint64_t seed, std::size_t index);

/// Mean of the 8 dihedral restorations, each mapped back before averaging.
TensorF self_ensemble(const PlainNetwork<float>& net, const TensorF& input);

/// Network output for one image, clamped to [0,1].
ImageBuffer restore(const PlainNetwork<float>& net, const ImageBuffer& degraded, bool ensemble = false);

/// Mean PSNR of restorations at parameter x. Throws DomainError outside the
/// model's domain and DataError for an empty image set.
double evaluate_at(const Model& model, std::span<const ImageBuffer> images, Task task, double x,
                   const EvalOptions& options = {});

/// Mean PSNR of the degraded inputs themselves.
double degraded_baseline(std::span<const ImageBuffer> images, Task task, double x, std::uint64_t seed = kEvalSeed);

struct SweepRow {
  double x = 0.0;
  double psnr = 0.0;
  std::size_t count = 0;
};

struct SweepReport {
  std::vector<SweepRow> rows;

  [[nodiscard]] std::string to_csv() const;
};

/// One evaluate_at row per x; `xs` must be strictly increasing.
SweepReport sweep(const Model& model, std::span<const ImageBuffer> images, Task task, std::span<const double> xs,
                  const EvalOptions& options = {});

/// "a:b:step" (inclusive of b when reached) or a comma-separated list.
std::vector<double> parse_grid(std::string_view spec);
[[nodiscard]] std::vector<double> default_sweep_grid(Task task);

struct KernelSlice {
  double x = 0.0;
  TensorF kernel;  // [k, k]
  double l2 = 0.0;
};

struct KernelGrid {
  std::size_t layer = 0;
  std::size_t channel = 0;
  std::size_t input_channel = 0;
  std::vector<KernelSlice> slices;
};

/// The k x k kernel of (layer, output channel, input channel) evaluated at each x.
/// `layer` indexes the network's layer list and must be a convolution.
KernelGrid kernel_grid(const Model& model, std::size_t layer, std::size_t channel, std::span<const double> xs,
                       std::size_t input_channel = 0);
/// Rows of (x, l2, row, col, value).
std::string kernel_csv(const KernelGrid& grid);
/// Slices side by side separated by `pad` zero columns; each slice is scaled so
/// that its minimum maps to 0 and its maximum to 1 (255 when written).
ImageBuffer kernel_montage(const KernelGrid& grid, std::size_t pad = 1);

enum class Variant { FuncNet, Plain, IdentityH, MlpH };
[[nodiscard]] std::string_view to_string(Variant v);
[[nodiscard]] Variant variant_from_string(std::string_view name);

/// The run configuration a variant trains with, derived from the shared base.
RunConfig variant_config(const RunConfig& base, Variant v);

struct AblationRow {
  Variant variant;
  double x;
  double psnr;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  [[nodiscard]] std::string to_csv() const;
  /// Mean PSNR of one variant over its probe levels.
  [[nodiscard]] double mean(Variant v) const;
};

/// Trains every variant under output.dir/<variant> (reusing finished runs) and
/// evaluates it at the task's probe levels. IdentityH coincides with FuncNet when
/// the task map already is the identity and is then reported from the same run.
AblationReport ablate(const RunConfig& base, std::span<const Variant> variants, const EvalOptions& options = {});

}  // namespace funcnet
