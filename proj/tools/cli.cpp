#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "funcnet/errors.hpp"
#include "funcnet/evaluate.hpp"
#include "funcnet/parallel.hpp"
#include "funcnet/train.hpp"

namespace funcnet::cli {

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void add_run_overrides(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--task", o.task, "denoise or deblock");
  cmd->add_option("--model", o.model, "funcnet or plain");
  cmd->add_option("--map", o.map, "parameter map: identity, reciprocal, jpeg, mlp (task default when empty)");
  cmd->add_option("--manifest", o.manifest, "image manifest CSV");
  cmd->add_option("--out-dir", o.out_dir, "directory for checkpoints and logs");
  cmd->add_option("--iters", o.iters, "training iterations");
  cmd->add_option("--seed", o.seed, "training seed");
  cmd->add_option("--checkpoint-every", o.checkpoint_every, "iterations between checkpoints");
  cmd->add_option("--validate-every", o.validate_every, "iterations between validation passes");
  cmd->add_flag("--fresh", o.fresh, "ignore state already in the output directory");
}

void add_eval_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--manifest", o.manifest, "image manifest CSV");
  cmd->add_option("--split", o.split, "manifest split to evaluate");
  cmd->add_flag("--ensemble", o.ensemble, "average over the 8 dihedral transforms");
  cmd->add_option("--eval-seed", o.eval_seed, "seed of the evaluation noise");
}

RunConfig run_config(const CLI::App& cmd, const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  auto given = [&](const char* flag) { return cmd.count(flag) > 0; };
  if (given("--task")) c.train.task = task_from_string(o.task);
  if (given("--model")) c.model = model_kind_from_string(o.model);
  if (given("--map")) c.map = map_kind_from_string(o.map);
  if (given("--manifest")) c.data.manifest = o.manifest;
  if (given("--out-dir")) c.output.dir = o.out_dir;
  if (given("--iters")) c.train.total_iters = o.iters;
  if (given("--seed")) c.train.seed = o.seed;
  if (given("--checkpoint-every")) c.output.checkpoint_every = o.checkpoint_every;
  if (given("--validate-every")) c.output.validate_every = o.validate_every;
  c.validate();
  if (!fs::exists(c.data.manifest)) throw DataError("manifest not found: " + c.data.manifest.string());
  return c;
}

std::vector<ImageBuffer> eval_images(const Options& o, Task task) {
  const fs::path manifest = o.manifest;
  auto images = load_split(read_manifest(manifest), o.split, task_channels(task));
  if (images.empty()) throw DataError("manifest " + manifest.string() + " has no '" + o.split + "' images");
  return images;
}

EvalOptions eval_options(const Options& o) { return EvalOptions{o.ensemble, o.eval_seed}; }

int cmd_train(const CLI::App& cmd, const Options& o, std::ostream& out) {
  RunConfig c = run_config(cmd, o);
  const TrainData data = load_train_data(c);
  if (o.fresh) {
    for (const char* name : {"last.ckpt", "final.ckpt", "log.csv"}) fs::remove(c.output.dir / name);
  }
  TrainOptions opts;
  opts.on_step = [&](const LossReport& r) {
    if (r.iteration % 100 == 0) {
      out << "iter " << r.iteration << " loss " << format_number(r.loss) << " lr " << format_number(r.lr) << " ("
          << format_number(r.wall_ms) << " ms)\n"
          << std::flush;
    }
  };
  const Checkpoint ckpt = train_loop(c, data, opts);
  out << "trained " << ckpt.progress.iteration << " iterations; checkpoint " << (c.output.dir / "final.ckpt").string()
      << "\n";
  return kOk;
}

int cmd_eval(const CLI::App& cmd, const Options& o, std::ostream& out, bool plain) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (plain && ckpt.model.kind != ModelKind::Plain) throw ConfigError(o.checkpoint + " is not a plain checkpoint");
  if (cmd.count("--x") == 0 && !ckpt.parameter) throw ConfigError("--x is required for " + o.checkpoint);
  const double x = cmd.count("--x") > 0 ? o.x : *ckpt.parameter;
  ckpt.model.config().domain.require(x);
  const auto images = eval_images(o, ckpt.task);
  const double value = evaluate_at(ckpt.model, images, ckpt.task, x, eval_options(o));
  out << "parameter " << format_number(x) << " psnr_db " << format_number(value) << "\n";
  if (!o.out.empty()) {
    SweepReport r{{SweepRow{x, value, images.size()}}};
    write_text(o.out, r.to_csv());
  }
  return kOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const auto grid = o.grid.empty() ? default_sweep_grid(ckpt.task) : parse_grid(o.grid);
  const auto images = eval_images(o, ckpt.task);
  const std::string csv = sweep(ckpt.model, images, ckpt.task, grid, eval_options(o)).to_csv();
  if (o.out.empty()) {
    out << csv;
  } else {
    write_text(o.out, csv);
  }
  return kOk;
}

int cmd_export(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (o.out.empty()) throw ConfigError("--out is required");
  const Checkpoint plain = export_plain(ckpt, o.x);
  save_checkpoint(o.out, plain);
  out << "exported parameter " << format_number(o.x) << " to " << o.out << "\n";
  return kOk;
}

int cmd_kernels(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (o.out.empty()) throw ConfigError("--out is required");
  const auto grid = o.grid.empty() ? default_sweep_grid(ckpt.task) : parse_grid(o.grid);
  const KernelGrid k = kernel_grid(ckpt.model, o.layer, o.channel, grid, o.input_channel);
  write_text(o.out + ".csv", kernel_csv(k));
  write_pnm(o.out + ".pgm", kernel_montage(k));
  for (const auto& s : k.slices) out << "parameter " << format_number(s.x) << " l2 " << format_number(s.l2) << "\n";
  return kOk;
}

int cmd_ablate(const CLI::App& cmd, const Options& o, std::ostream& out) {
  RunConfig c = run_config(cmd, o);
  std::vector<Variant> variants;
  std::size_t start = 0;
  while (start <= o.variants.size()) {
    const auto comma = o.variants.find(',', start);
    const auto end = comma == std::string::npos ? o.variants.size() : comma;
    variants.push_back(variant_from_string(o.variants.substr(start, end - start)));
    start = end + 1;
  }
  const AblationReport report = ablate(c, variants);
  if (o.out.empty()) {
    out << report.to_csv();
  } else {
    write_text(o.out, report.to_csv());
  }
  return kOk;
}

int cmd_degrade(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("--out is required");
  const Task task = task_from_string(o.task);
  const DegradationSpec spec{task, o.x};
  spec.validate();
  ImageBuffer img = read_pnm(o.input);
  if (task == Task::Deblock) img = to_gray(img);
  Rng rng = stream_rng({o.eval_seed, stream_tag::eval});
  const ImageBuffer degraded = degrade(img, spec, rng);
  write_pnm(o.out, degraded);
  out << "psnr_db " << format_number(psnr(clamped(degraded), img)) << "\n";
  return kOk;
}

}  // namespace

std::unique_ptr<CLI::App> make_app(Options& o) {
  auto app = std::make_unique<CLI::App>("Functional neural networks for parameterized image restoration", "funcnet");
  app->option_defaults()->always_capture_default();
  app->require_subcommand(1);
  o.threads = threads_from_env();
  o.iters = TrainConfig{}.total_iters;
  o.seed = TrainConfig{}.seed;
  o.checkpoint_every = OutputConfig{}.checkpoint_every;
  o.validate_every = OutputConfig{}.validate_every;
  o.eval_seed = kEvalSeed;
  o.task = to_string(TrainConfig{}.task);
  o.model = to_string(RunConfig{}.model);
  o.manifest = default_manifest().string();
  o.out_dir = OutputConfig{}.dir.string();
  app->add_option("--threads", o.threads, "worker threads (default from FUNCNET_THREADS)");

  add_run_overrides(app->add_subcommand("train", "train a network"), o);

  for (const char* name : {"eval", "eval-plain"}) {
    auto* cmd = app->add_subcommand(name, std::string(name) == "eval" ? "mean PSNR at one parameter value"
                                                                      : "mean PSNR of an exported plain network");
    cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
    cmd->add_option("--x", o.x, "parameter value (plain exports default to their stored value)");
    add_eval_options(cmd, o);
    cmd->add_option("--out", o.out, "optional CSV report");
  }

  auto* sweep_cmd = app->add_subcommand("sweep", "mean PSNR over a grid of parameter values");
  sweep_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  sweep_cmd->add_option("--grid", o.grid, "start:stop:step or comma list (task default when empty)");
  add_eval_options(sweep_cmd, o);
  sweep_cmd->add_option("--out", o.out, "CSV report (stdout when empty)");

  auto* export_cmd = app->add_subcommand("export", "materialize a plain network at one parameter value");
  export_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  export_cmd->add_option("--x", o.x, "parameter value")->required();
  export_cmd->add_option("--out", o.out, "plain checkpoint to write")->required();

  auto* kernels_cmd = app->add_subcommand("kernels", "kernel slices across parameter values");
  kernels_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  kernels_cmd->add_option("--layer", o.layer, "index into the layer list (a convolution)");
  kernels_cmd->add_option("--channel", o.channel, "output channel");
  kernels_cmd->add_option("--input-channel", o.input_channel, "input channel");
  kernels_cmd->add_option("--grid", o.grid, "parameter values (task default when empty)");
  kernels_cmd->add_option("--out", o.out, "output prefix for .csv and .pgm")->required();

  auto* ablate_cmd = app->add_subcommand("ablate", "train and compare network variants");
  add_run_overrides(ablate_cmd, o);
  ablate_cmd->add_option("--variants", o.variants, "comma list of funcnet, plain, identity_h, mlp_h");
  ablate_cmd->add_option("--out", o.out, "CSV report (stdout when empty)");

  auto* degrade_cmd = app->add_subcommand("degrade", "apply a synthetic degradation to an image");
  degrade_cmd->add_option("--input", o.input, "PGM or PPM image")->required();
  degrade_cmd->add_option("--task", o.task, "denoise or deblock");
  degrade_cmd->add_option("--x", o.x, "noise level or JPEG quality")->required();
  degrade_cmd->add_option("--eval-seed", o.eval_seed, "noise seed");
  degrade_cmd->add_option("--out", o.out, "output image")->required();
  return app;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  auto app = make_app(o);
  try {
    app->parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app->help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app->help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  set_num_threads(o.threads);
  const CLI::App* cmd = app->get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (name == "train") return cmd_train(*cmd, o, out);
    if (name == "eval") return cmd_eval(*cmd, o, out, false);
    if (name == "eval-plain") return cmd_eval(*cmd, o, out, true);
    if (name == "sweep") return cmd_sweep(o, out);
    if (name == "export") return cmd_export(o, out);
    if (name == "kernels") return cmd_kernels(o, out);
    if (name == "ablate") return cmd_ablate(*cmd, o, out);
    if (name == "degrade") return cmd_degrade(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const NonFiniteError& e) {
    err << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  err << "unknown command " << name << "\n";
  return kUnexpected;
}

}  // namespace funcnet::cli
