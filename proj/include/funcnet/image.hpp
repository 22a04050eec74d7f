#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "funcnet/tensor.hpp"

namespace funcnet {

/// Planar (channel-major) float image. Values read from files are in [0,1];
/// degraded images may leave that range until they are clamped for output.
struct ImageBuffer {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> values;

  ImageBuffer() = default;
  ImageBuffer(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), values(h * w * c, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }

  [[nodiscard]] bool same_shape(const ImageBuffer& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  /// [1,C,H,W] tensor view copy.
  [[nodiscard]] TensorF to_tensor() const;
  /// Sample `n` of an [N,C,H,W] tensor.
  static ImageBuffer from_tensor(const TensorF& t, std::size_t n = 0);

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

/// Binary 8-bit PGM (P5) or PPM (P6).
ImageBuffer read_pnm(const std::filesystem::path& path);
/// Writes P5 for one channel, P6 for three; values are clamped to [0,1] and rounded.
void write_pnm(const std::filesystem::path& path, const ImageBuffer& img);

/// BT.601 luma of an RGB image; grayscale input is returned unchanged.
ImageBuffer to_gray(const ImageBuffer& img);
/// Values clamped to [0,1].
ImageBuffer clamped(ImageBuffer img);

struct ManifestEntry {
  std::string split;
  std::filesystem::path path;
};

/// CSV with header "split,path"; relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

/// Loads every image of one split, converting to `channels` (1 = luma, 3 = RGB).
std::vector<ImageBuffer> load_split(const std::vector<ManifestEntry>& manifest, const std::string& split,
                                    std::size_t channels);

}  // namespace funcnet
