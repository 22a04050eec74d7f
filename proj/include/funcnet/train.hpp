#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "funcnet/checkpoint.hpp"
#include "funcnet/config.hpp"
#include "funcnet/degrade.hpp"
#include "funcnet/image.hpp"

namespace funcnet {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every tensor in `params`. Throws
/// NonFiniteError naming the first tensor whose gradient is not finite.
void adam_step(std::span<const std::pair<std::string, TensorF*>> params, std::span<const TensorF> grads,
               AdamState& state, const AdamHyper& hyper, double lr);

/// lr0 * 0.5^floor(iter / decay_every).
[[nodiscard]] double lr_at(const TrainConfig& config, std::size_t iter);

/// Minibatch for one iteration: levels_per_batch parameter values, each shared by
/// batch_n / levels_per_batch consecutive samples. Every random draw comes from a
/// stream addressed by (seed, iteration, sample), so the batch does not depend on
/// the worker count or on earlier iterations.
PatchBatch make_batch(const TrainConfig& config, std::span<const ImageBuffer> images, std::size_t iter);
/// Parameter levels of the minibatch at `iter`.
std::vector<double> batch_levels(const TrainConfig& config, std::size_t iter);

struct StepResult {
  double loss = 0.0;
  std::vector<TensorF> grads;  // aligned with named_tensors()
};

/// Mean absolute error of the restoration over the batch, with gradients of
/// every stored tensor. Each level's subbatch runs through its own weights.
StepResult loss_and_grads(const Model& model, const PatchBatch& batch, std::size_t levels);
/// Loss only, through the inference path.
double batch_loss(const Model& model, const PatchBatch& batch, std::size_t levels);

struct LossReport {
  std::size_t iteration = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

/// Samples, differentiates and updates once; `iter` is the zero-based step index.
LossReport train_step(Model& model, AdamState& state, const TrainConfig& config, std::span<const ImageBuffer> images,
                      std::size_t iter);

struct TrainData {
  std::vector<ImageBuffer> train;
  std::vector<ImageBuffer> val;
};

/// Loads both splits of the manifest with the task's channel count.
TrainData load_train_data(const RunConfig& config);

/// Validation probes: sigma in {15,35,75} or quality in {10,20,30,40}.
[[nodiscard]] std::vector<double> probe_levels(Task task);

struct TrainOptions {
  bool resume = true;  // continue from output.dir/last.ckpt when present
  std::function<void(const LossReport&)> on_step;
};

/// Runs the configured number of steps, writing output.dir/{last.ckpt,final.ckpt,log.csv}.
/// Returns the final checkpoint.
Checkpoint train_loop(const RunConfig& config, const TrainData& data, const TrainOptions& options = {});

/// Fresh model for a run, seeded from the run's seed.
Model initial_model(const RunConfig& config);

}  // namespace funcnet
