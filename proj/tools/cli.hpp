#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace funcnet::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfigError = 2,
  kDataError = 3,
  kDivergence = 4,
};

/// Values bound to the command-line flags of every subcommand.
struct Options {
  int threads = 1;

  // train / ablate
  std::string config;
  std::string task;
  std::string model;
  std::string map;
  std::string manifest;
  std::string out_dir;
  std::size_t iters = 0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;
  std::size_t validate_every = 0;
  bool fresh = false;
  std::string variants = "funcnet,plain,identity_h,mlp_h";

  // evaluation
  std::string checkpoint;
  double x = 0.0;
  std::string grid;
  std::string split = "val";
  bool ensemble = false;
  std::uint64_t eval_seed = 0;
  std::string out;

  // kernels
  std::size_t layer = 0;
  std::size_t channel = 0;
  std::size_t input_channel = 0;

  // degrade
  std::string input;
};

/// Builds the parser with every subcommand bound to `opts`.
std::unique_ptr<CLI::App> make_app(Options& opts);

/// Parses and runs one command; messages go to `out` and `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace funcnet::cli
