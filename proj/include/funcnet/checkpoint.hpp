#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "funcnet/config.hpp"
#include "funcnet/model.hpp"

namespace funcnet {

/// A FuncNet or a plain network, as trained, stored and evaluated.
struct Model {
  ModelKind kind = ModelKind::FuncNet;
  FuncNetwork<float> func;    // kind == FuncNet
  PlainNetwork<float> plain;  // kind == Plain

  [[nodiscard]] const NetworkConfig& config() const { return kind == ModelKind::FuncNet ? func.config : plain.config; }
};

Model build_model(ModelKind kind, const NetworkConfig& config, Rng& rng);

/// Trainable tensors in storage order: theta_a then theta_b of every FuncParam,
/// followed by the learned-map weights; or every plain weight.
std::vector<std::pair<std::string, TensorF*>> named_tensors(Model& model);
std::vector<std::pair<std::string, const TensorF*>> named_tensors(const Model& model);

/// Fixed weights for parameter value x. Plain models ignore x after the domain check.
PlainNetwork<float> weights_for(const Model& model, double x);

/// Adam moments aligned with named_tensors().
struct AdamState {
  std::vector<TensorF> m;
  std::vector<TensorF> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const Model& model);
};

struct BlobDescriptor {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;  // from the start of the blob section
  std::uint64_t length = 0;  // bytes
};

/// On-disk container: magic line, header length, JSON header, then 64-byte aligned
/// little-endian f32 blobs covered by a CRC32.
struct Container {
  Json header;  // user metadata; "blobs", "crc32" and "format_version" are managed by save/load
  std::vector<std::pair<std::string, TensorF>> blobs;

  [[nodiscard]] const TensorF& blob(const std::string& name) const;
  [[nodiscard]] bool has_blob(const std::string& name) const;
};

inline constexpr int kFormatVersion = 1;
inline constexpr std::size_t kBlobAlignment = 64;

void save_container(const std::filesystem::path& path, const Container& c);
/// Validates magic, version, descriptor coverage and checksum; throws DataError.
Container load_container(const std::filesystem::path& path);
/// Descriptors as written by save_container.
std::vector<BlobDescriptor> blob_layout(const Container& c);
/// Bytes of model parameters, excluding optimizer state.
std::uint64_t parameter_blob_bytes(const Container& c);

/// Training progress persisted with a checkpoint.
struct TrainProgress {
  std::size_t iteration = 0;  // steps completed
  double initial_loss = 0.0;
  std::size_t over_count = 0;  // consecutive iterations above the divergence threshold
};

struct Checkpoint {
  Model model;
  Task task = Task::Denoise;
  Json run;  // training echo; null for exports
  std::optional<double> parameter;  // set for exported plain networks
  std::optional<AdamState> adam;
  TrainProgress progress;
};

Container to_container(const Checkpoint& ckpt);
Checkpoint from_container(const Container& c);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Plain checkpoint of the model materialized at x.
Checkpoint export_plain(const Checkpoint& ckpt, double x);

}  // namespace funcnet
