#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "funcnet/degrade.hpp"
#include "funcnet/model.hpp"

namespace funcnet {

using Json = nlohmann::ordered_json;

enum class ModelKind { FuncNet, Plain };

[[nodiscard]] std::string_view to_string(ModelKind kind);
/// Accepts "funcnet" and "plain".
[[nodiscard]] ModelKind model_kind_from_string(std::string_view name);

struct TrainConfig {
  Task task = Task::Denoise;
  double lr0 = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_n = 16;
  std::size_t patch = 32;
  std::size_t total_iters = 20000;
  std::size_t decay_every = 8000;
  std::uint64_t seed = 1;
  std::size_t levels_per_batch = 4;
  double divergence_factor = 10.0;
  std::size_t divergence_patience = 500;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Patch origins snap to the 8x8 JPEG block grid for deblocking.
  [[nodiscard]] bool align8() const { return task == Task::Deblock; }
};

/// Manifest of the bundled corpus.
[[nodiscard]] std::filesystem::path default_manifest();

struct DataConfig {
  std::filesystem::path manifest = default_manifest();
  std::string train_split = "train";
  std::string val_split = "val";
};

struct OutputConfig {
  std::filesystem::path dir = "run";
  std::size_t checkpoint_every = 2000;
  std::size_t validate_every = 2000;
};

/// Everything one training run needs.
struct RunConfig {
  ModelKind model = ModelKind::FuncNet;
  std::optional<MapKind> map;  // task default when unset
  std::size_t width = 32;
  std::size_t blocks = 3;
  TrainConfig train;
  DataConfig data;
  OutputConfig output;

  [[nodiscard]] MapKind effective_map() const { return map.value_or(task_map(train.task)); }
  [[nodiscard]] NetworkConfig network() const;
  void validate() const;
};

/// Parses a config document; unknown keys and ill-typed values raise ConfigError
/// with the JSON path of the problem. Relative data paths resolve against `base_dir`.
RunConfig run_config_from_json(const Json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// Full document, including data and output sections.
Json to_json(const RunConfig& config);
/// The location-independent part stored in checkpoints: model, network, train.
Json training_echo(const RunConfig& config);

Json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& doc);

Json to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const Json& doc);

}  // namespace funcnet
