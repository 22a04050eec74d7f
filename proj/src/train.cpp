#include "funcnet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "funcnet/errors.hpp"
#include "funcnet/evaluate.hpp"
#include "funcnet/kernels.hpp"
#include "funcnet/parallel.hpp"

namespace funcnet {

void adam_step(std::span<const std::pair<std::string, TensorF*>> params, std::span<const TensorF> grads,
               AdamState& state, const AdamHyper& hyper, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    require_same_shape(params[p].second->shape(), grads[p].shape(), "adam_step");
    for (float g : grads[p].data()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient for " + params[p].first);
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].second->data();
    auto m = state.m[p].data();
    auto v = state.v[p].data();
    const auto g = grads[p].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      const double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      w[i] = static_cast<float>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + hyper.eps));
    }
  }
}

double lr_at(const TrainConfig& config, std::size_t iter) {
  return config.lr0 * std::pow(0.5, static_cast<double>(iter / config.decay_every));
}

std::vector<double> batch_levels(const TrainConfig& config, std::size_t iter) {
  Rng rng = stream_rng({config.seed, stream_tag::levels, iter});
  std::vector<double> levels(config.levels_per_batch);
  for (auto& x : levels) x = sample_parameter(config.task, rng);
  return levels;
}

PatchBatch make_batch(const TrainConfig& config, std::span<const ImageBuffer> images, std::size_t iter) {
  if (images.empty()) throw DataError("no training images");
  const std::size_t n = config.batch_n, p = config.patch;
  const std::size_t c = images[0].channels;
  for (const auto& img : images) {
    if (img.channels != c) throw DataError("training images must share a channel count");
    if (img.height < p || img.width < p) throw DataError("training image smaller than the patch size");
  }
  const auto levels = batch_levels(config, iter);
  const std::size_t per_level = n / config.levels_per_batch;

  PatchBatch batch;
  batch.clean = TensorF(Shape{n, c, p, p});
  batch.degraded = TensorF(Shape{n, c, p, p});
  batch.parameters.resize(n);
  batch.origins.resize(n);
  const std::size_t sample_size = c * p * p;
  parallel_for(n, [&](std::size_t s) {
    Rng rng = stream_rng({config.seed, stream_tag::sample, iter, s});
    const double x = levels[s / per_level];
    const PatchOrigin origin = sample_origin(images, p, config.align8(), rng);
    TensorF clean(Shape{1, c, p, p});
    copy_patch(images[origin.image], origin, p, clean, 0);
    ImageBuffer patch = ImageBuffer::from_tensor(clean);
    ImageBuffer degraded = degrade(patch, DegradationSpec{config.task, x}, rng);
    std::uniform_int_distribution<int> pick_code(0, 7);
    const int code = pick_code(rng);
    const TensorF a = augment(clean, code);
    const TensorF b = augment(degraded.to_tensor(), code);
    std::copy(a.data().begin(), a.data().end(), batch.clean.data().begin() + static_cast<std::ptrdiff_t>(s * sample_size));
    std::copy(b.data().begin(), b.data().end(),
              batch.degraded.data().begin() + static_cast<std::ptrdiff_t>(s * sample_size));
    batch.parameters[s] = x;
    batch.origins[s] = origin;
  });
  return batch;
}

namespace {

TensorF slice_batch(const TensorF& t, std::size_t begin, std::size_t count) {
  const auto& s = t.shape();
  const std::size_t per = s[1] * s[2] * s[3];
  std::vector<float> data(t.data().begin() + static_cast<std::ptrdiff_t>(begin * per),
                          t.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * per));
  return TensorF(Shape{count, s[1], s[2], s[3]}, std::move(data));
}

void check_batch(const PatchBatch& batch, std::size_t levels) {
  const std::size_t n = batch.clean.shape()[0];
  if (batch.clean.shape() != batch.degraded.shape()) throw ShapeError("clean and degraded batches differ in shape");
  if (batch.parameters.size() != n) throw ShapeError("one parameter per sample is required");
  if (levels == 0 || n % levels != 0) throw ConfigError("batch size must be divisible by the number of levels");
}

}  // namespace

StepResult loss_and_grads(const Model& model, const PatchBatch& batch, std::size_t levels) {
  check_batch(batch, levels);
  const std::size_t n = batch.clean.shape()[0], per_level = n / levels;
  Tape<float> tape;
  FuncLeaves<float> leaves;
  std::vector<Var<float>> plain_leaves;
  if (model.kind == ModelKind::FuncNet) {
    leaves = attach(tape, model.func);
  } else {
    plain_leaves = attach(tape, model.plain);
  }
  const float weight = 1.0f / static_cast<float>(levels);
  std::optional<Var<float>> total;
  for (std::size_t l = 0; l < levels; ++l) {
    const double x = batch.parameters[l * per_level];
    const auto weights = model.kind == ModelKind::FuncNet ? weights_at(model.func, leaves, x) : plain_leaves;
    const Var<float> input = tape.constant(slice_batch(batch.degraded, l * per_level, per_level));
    const Var<float> target = tape.constant(slice_batch(batch.clean, l * per_level, per_level));
    const Var<float> out = run_layers<Var<float>>(model.config(), weights, input);
    const Var<float> level_loss = mul_scalar(reduce_mean_abs(sub(out, target)), weight);
    total = total ? add(*total, level_loss) : level_loss;
  }
  StepResult result;
  result.loss = scalar_value(*total);
  if (!std::isfinite(result.loss)) throw NonFiniteError("training loss is not finite");
  const Gradients<float> grads = tape.backward(*total);
  if (model.kind == ModelKind::FuncNet) {
    for (std::size_t i = 0; i < leaves.theta_a.size(); ++i) {
      result.grads.push_back(grads.get_or_zero(leaves.theta_a[i]));
      result.grads.push_back(grads.get_or_zero(leaves.theta_b[i]));
    }
    for (const auto& v : leaves.mlp) result.grads.push_back(grads.get_or_zero(v));
  } else {
    for (const auto& v : plain_leaves) result.grads.push_back(grads.get_or_zero(v));
  }
  return result;
}

double batch_loss(const Model& model, const PatchBatch& batch, std::size_t levels) {
  check_batch(batch, levels);
  const std::size_t n = batch.clean.shape()[0], per_level = n / levels;
  double total = 0.0;
  for (std::size_t l = 0; l < levels; ++l) {
    const PlainNetwork<float> net = weights_for(model, batch.parameters[l * per_level]);
    const TensorF out = forward_plain(net, slice_batch(batch.degraded, l * per_level, per_level));
    const TensorF diff = sub(out, slice_batch(batch.clean, l * per_level, per_level));
    total += static_cast<double>(reduce_mean_abs(diff)[0]) / static_cast<double>(levels);
  }
  return total;
}

LossReport train_step(Model& model, AdamState& state, const TrainConfig& config, std::span<const ImageBuffer> images,
                      std::size_t iter) {
  const auto start = std::chrono::steady_clock::now();
  const PatchBatch batch = make_batch(config, images, iter);
  const StepResult step = loss_and_grads(model, batch, config.levels_per_batch);
  const double lr = lr_at(config, iter);
  const auto params = named_tensors(model);
  adam_step(params, step.grads, state, AdamHyper{config.beta1, config.beta2, config.eps}, lr);
  const auto end = std::chrono::steady_clock::now();
  return LossReport{iter + 1, step.loss, lr, std::chrono::duration<double, std::milli>(end - start).count()};
}

TrainData load_train_data(const RunConfig& config) {
  if (config.data.manifest.empty()) throw ConfigError("data.manifest is not set");
  const auto entries = read_manifest(config.data.manifest);
  const std::size_t channels = task_channels(config.train.task);
  TrainData data{load_split(entries, config.data.train_split, channels),
                 load_split(entries, config.data.val_split, channels)};
  if (data.train.empty()) throw DataError("manifest has no '" + config.data.train_split + "' images");
  if (data.val.empty()) throw DataError("manifest has no '" + config.data.val_split + "' images");
  for (const auto& img : data.train) {
    if (img.height < config.train.patch || img.width < config.train.patch) {
      throw DataError("training image smaller than the " + std::to_string(config.train.patch) + " patch");
    }
  }
  return data;
}

std::vector<double> probe_levels(Task task) {
  return task == Task::Denoise ? std::vector<double>{15.0, 35.0, 75.0} : std::vector<double>{10.0, 20.0, 30.0, 40.0};
}

Model initial_model(const RunConfig& config) {
  Rng rng = stream_rng({config.train.seed, stream_tag::init});
  return build_model(config.model, config.network(), rng);
}

namespace {

std::string log_header(Task task) {
  std::string h = "iteration,loss,lr";
  for (double x : probe_levels(task)) h += ",val_psnr_" + format_number(x);
  return h + "\n";
}

// Keeps the header and the rows of steps up to `iteration`.
void truncate_log(const std::filesystem::path& path, std::size_t iteration, const std::string& header) {
  std::ifstream in(path);
  std::string kept = header, line;
  if (in) {
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      if (std::stoull(line.substr(0, comma)) > iteration) break;
      kept += line + "\n";
    }
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << kept;
}

}  // namespace

Checkpoint train_loop(const RunConfig& config, const TrainData& data, const TrainOptions& options) {
  config.validate();
  const TrainConfig& tc = config.train;
  const auto& dir = config.output.dir;
  const auto last_path = dir / "last.ckpt", final_path = dir / "final.ckpt", log_path = dir / "log.csv";
  const Json echo = training_echo(config);
  std::filesystem::create_directories(dir);

  Checkpoint ckpt;
  bool resumed = false;
  if (options.resume) {
    for (const auto& path : {final_path, last_path}) {
      if (!std::filesystem::exists(path)) continue;
      Checkpoint existing = load_checkpoint(path);
      if (existing.run != echo) {
        throw ConfigError(path.string() + " belongs to a different configuration; choose another output directory");
      }
      if (path == final_path) return existing;
      ckpt = std::move(existing);
      resumed = true;
      break;
    }
  }
  if (!resumed) {
    ckpt.model = initial_model(config);
    ckpt.adam = AdamState::zeros_like(ckpt.model);
    ckpt.run = echo;
    ckpt.task = tc.task;
  }
  if (!ckpt.adam) throw DataError("checkpoint has no optimizer state to resume from");

  const std::string header = log_header(tc.task);
  truncate_log(log_path, resumed ? ckpt.progress.iteration : 0, header);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw DataError("cannot write " + log_path.string());

  const auto probes = probe_levels(tc.task);
  TrainProgress& prog = ckpt.progress;
  char buf[64];
  while (prog.iteration < tc.total_iters) {
    const LossReport r = train_step(ckpt.model, *ckpt.adam, tc, data.train, prog.iteration);
    if (prog.iteration == 0) prog.initial_loss = r.loss;
    prog.over_count = r.loss > tc.divergence_factor * prog.initial_loss ? prog.over_count + 1 : 0;
    prog.iteration = r.iteration;
    if (options.on_step) options.on_step(r);

    std::snprintf(buf, sizeof buf, "%zu,", r.iteration);
    log << buf << format_number(r.loss) << ',' << format_number(r.lr);
    const bool done = prog.iteration == tc.total_iters;
    if (prog.iteration % config.output.validate_every == 0 || done) {
      for (double x : probes) log << ',' << format_number(evaluate_at(ckpt.model, data.val, tc.task, x));
    } else {
      for (std::size_t i = 0; i < probes.size(); ++i) log << ',';
    }
    log << '\n';

    if (prog.over_count >= tc.divergence_patience) {
      log.flush();
      std::ostringstream os;
      os << "training diverged: loss stayed above " << tc.divergence_factor << "x the initial loss ("
         << prog.initial_loss << ") for " << prog.over_count << " iterations, at iteration " << prog.iteration;
      throw DivergenceError(os.str());
    }
    if (prog.iteration % config.output.checkpoint_every == 0 || done) {
      log.flush();
      save_checkpoint(last_path, ckpt);
    }
  }
  log.flush();
  save_checkpoint(final_path, ckpt);
  return ckpt;
}

}  // namespace funcnet
