#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cli.hpp"
#include "funcnet/checkpoint.hpp"
#include "funcnet/image.hpp"
#include "test_support.hpp"

namespace funcnet {
namespace {

namespace fs = std::filesystem;

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "funcnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("funcnet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    manifest_ = testing::write_tiny_corpus(dir_ / "corpus");
    write_config(dir_ / "tiny.json", "");
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write_config(const fs::path& path, const std::string& extra_train) const {
    std::ofstream out(path);
    out << R"({"network": {"width": 4, "blocks": 1},
              "train": {"batch_n": 4, "levels_per_batch": 2, "patch": 16, "total_iters": 6, "lr0": 0.001)"
        << extra_train << R"(},
              "data": {"manifest": ")"
        << manifest_.string() << R"("},
              "output": {"checkpoint_every": 3, "validate_every": 3}})";
  }

  // Trains the tiny config into `out` and returns the final checkpoint path.
  fs::path train(const std::string& out, const std::string& threads = "1") const {
    const Result r = run_cli({"--threads", threads, "train", "--config", (dir_ / "tiny.json").string(), "--out-dir",
                              (dir_ / out).string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return dir_ / out / "final.ckpt";
  }

  fs::path dir_;
  fs::path manifest_;
};

TEST(CliHelp, EveryFlagIsListedWithItsDefault) {
  cli::Options opts;
  const auto app = cli::make_app(opts);
  for (const CLI::App* cmd : app->get_subcommands({})) {
    const std::string help = cmd->help();
    for (const CLI::Option* opt : cmd->get_options()) {
      const std::string name = opt->get_name(false, true);
      if (name == "--help") continue;
      const std::string flag = opt->get_lnames().empty() ? name : "--" + opt->get_lnames().front();
      EXPECT_NE(help.find(flag), std::string::npos) << cmd->get_name() << " " << flag;
      const std::string def = opt->get_default_str();
      if (!def.empty() && opt->get_type_size() != 0) {
        EXPECT_NE(help.find(flag + " " + opt->get_type_name() + " [" + def + "]"), std::string::npos)
            << cmd->get_name() << " " << flag << " default " << def << "\n"
            << help;
      }
    }
  }
  const std::string top = app->help();
  EXPECT_NE(top.find("--threads"), std::string::npos);
  for (const char* sub : {"train", "eval", "eval-plain", "sweep", "export", "kernels", "ablate", "degrade"}) {
    EXPECT_NE(top.find(sub), std::string::npos) << sub;
  }
}

TEST(CliHelp, DefaultsComeFromTheLibrary) {
  cli::Options opts;
  const auto app = cli::make_app(opts);
  const CLI::App* train = app->get_subcommand("train");
  EXPECT_EQ(train->get_option("--iters")->get_default_str(), "20000");
  EXPECT_EQ(train->get_option("--seed")->get_default_str(), "1");
  EXPECT_EQ(train->get_option("--task")->get_default_str(), "denoise");
  EXPECT_EQ(app->get_subcommand("eval")->get_option("--eval-seed")->get_default_str(), "20170401");
  EXPECT_EQ(run_cli({"train", "--help"}).code, 0);
}

TEST(CliErrors, ParseFailuresAreConfigErrors) {
  EXPECT_EQ(run_cli({}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"train", "--no-such-flag"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"train", "--iters", "many"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"eval"}).code, cli::kConfigError);
}

TEST_F(CliTest, ConfigProblemsExitWithConfigCode) {
  EXPECT_EQ(run_cli({"train", "--config", (dir_ / "missing.json").string()}).code, cli::kConfigError);
  write_config(dir_ / "bad.json", R"(, "learning_rate": 1)");
  const Result r = run_cli({"train", "--config", (dir_ / "bad.json").string()});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("train.learning_rate"), std::string::npos) << r.err;
  write_config(dir_ / "deblock36.json", R"(, "task": "deblock", "patch": 36)");
  EXPECT_EQ(run_cli({"train", "--config", (dir_ / "deblock36.json").string()}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"train", "--config", (dir_ / "tiny.json").string(), "--task", "sr"}).code, cli::kConfigError);
}

TEST_F(CliTest, MissingImageIsDataErrorWithoutCheckpoint) {
  fs::remove(manifest_.parent_path() / "img1.ppm");
  const auto out = dir_ / "run";
  const Result r = run_cli({"train", "--config", (dir_ / "tiny.json").string(), "--out-dir", out.string()});
  EXPECT_EQ(r.code, cli::kDataError) << r.err;
  EXPECT_FALSE(fs::exists(out / "last.ckpt"));
  EXPECT_FALSE(fs::exists(out / "final.ckpt"));
}

TEST_F(CliTest, MissingCheckpointIsDataError) {
  EXPECT_EQ(run_cli({"eval", "--checkpoint", (dir_ / "none.ckpt").string(), "--x", "15"}).code, cli::kDataError);
}

TEST_F(CliTest, DivergenceHasItsOwnCode) {
  write_config(dir_ / "hot.json", R"(, "lr0": 1.0, "total_iters": 50, "divergence_patience": 2)");
  const Result r = run_cli({"train", "--config", (dir_ / "hot.json").string(), "--out-dir", (dir_ / "hot").string()});
  EXPECT_EQ(r.code, cli::kDivergence) << r.err;
}

TEST_F(CliTest, TrainTwiceGivesIdenticalLogsAcrossThreadCounts) {
  const fs::path a = train("a", "1");
  const fs::path b = train("b", "3");
  EXPECT_EQ(file_bytes(dir_ / "a/log.csv"), file_bytes(dir_ / "b/log.csv"));
  EXPECT_EQ(file_bytes(a), file_bytes(b));
}

TEST_F(CliTest, FlagsOverrideTheConfigFile) {
  const auto out = dir_ / "override";
  const Result r = run_cli({"train", "--config", (dir_ / "tiny.json").string(), "--out-dir", out.string(), "--iters",
                            "2", "--seed", "7", "--model", "plain"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Checkpoint c = load_checkpoint(out / "final.ckpt");
  EXPECT_EQ(c.progress.iteration, 2u);
  EXPECT_EQ(c.model.kind, ModelKind::Plain);
  EXPECT_EQ(c.run.at("train").at("seed"), 7);
  EXPECT_EQ(c.run.at("network").at("width"), 4);
}

TEST_F(CliTest, EvalOutsideDomainNamesTheDomain) {
  const fs::path ckpt = train("run");
  const Result r = run_cli({"eval", "--checkpoint", ckpt.string(), "--x", "90"});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("[0,75]"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"eval", "--checkpoint", ckpt.string()}).code, cli::kConfigError);
}

TEST_F(CliTest, ExportThenEvalPlainMatchesEval) {
  const fs::path ckpt = train("run");
  const std::string manifest = manifest_.string();
  const Result direct = run_cli({"eval", "--checkpoint", ckpt.string(), "--x", "35", "--manifest", manifest});
  ASSERT_EQ(direct.code, 0) << direct.err;
  const fs::path plain = dir_ / "plain35.ckpt";
  ASSERT_EQ(run_cli({"export", "--checkpoint", ckpt.string(), "--x", "35", "--out", plain.string()}).code, 0);
  const Result exported = run_cli({"eval-plain", "--checkpoint", plain.string(), "--manifest", manifest});
  ASSERT_EQ(exported.code, 0) << exported.err;
  EXPECT_EQ(exported.out, direct.out);
  EXPECT_EQ(run_cli({"eval-plain", "--checkpoint", ckpt.string(), "--manifest", manifest}).code, cli::kConfigError);
}

TEST_F(CliTest, SweepGridEmitsOneRowPerValue) {
  const fs::path ckpt = train("run");
  const fs::path csv = dir_ / "sweep.csv";
  const Result r = run_cli({"sweep", "--checkpoint", ckpt.string(), "--grid", "5:75:10", "--manifest",
                            manifest_.string(), "--out", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = file_bytes(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
  const Result again = run_cli({"sweep", "--checkpoint", ckpt.string(), "--grid", "5:75:10", "--manifest",
                                manifest_.string()});
  EXPECT_EQ(again.out, text);
}

TEST_F(CliTest, KernelsWritesCsvAndMontage) {
  const fs::path ckpt = train("run");
  const fs::path prefix = dir_ / "k/layer0";
  const Result r = run_cli({"kernels", "--checkpoint", ckpt.string(), "--layer", "0", "--channel", "1", "--grid",
                            "0,30,75", "--out", prefix.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const ImageBuffer m = read_pnm(prefix.string() + ".pgm");
  EXPECT_EQ(m.height, 3u);
  EXPECT_EQ(m.width, 11u);
  EXPECT_TRUE(fs::exists(prefix.string() + ".csv"));
  EXPECT_EQ(run_cli({"kernels", "--checkpoint", ckpt.string(), "--layer", "1", "--out", prefix.string()}).code,
            cli::kConfigError);
}

TEST_F(CliTest, DegradeWritesImage) {
  const fs::path in = manifest_.parent_path() / "img0.ppm";
  const fs::path out = dir_ / "noisy.ppm";
  const Result r = run_cli({"degrade", "--input", in.string(), "--x", "25", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("psnr_db ", 0), 0u);
  EXPECT_EQ(read_pnm(out).channels, 3u);
  const fs::path jpeg = dir_ / "q20.pgm";
  ASSERT_EQ(run_cli({"degrade", "--input", in.string(), "--task", "deblock", "--x", "20", "--out", jpeg.string()}).code,
            0);
  EXPECT_EQ(read_pnm(jpeg).channels, 1u);
  EXPECT_EQ(run_cli({"degrade", "--input", in.string(), "--task", "deblock", "--x", "5", "--out", jpeg.string()}).code,
            cli::kConfigError);
  EXPECT_EQ(run_cli({"degrade", "--input", (dir_ / "nope.ppm").string(), "--x", "5", "--out", out.string()}).code,
            cli::kDataError);
}

TEST_F(CliTest, AblateReportsVariants) {
  const fs::path csv = dir_ / "abl.csv";
  const Result r = run_cli({"ablate", "--config", (dir_ / "tiny.json").string(), "--out-dir",
                            (dir_ / "abl").string(), "--variants", "funcnet,identity_h", "--out", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = file_bytes(csv);
  EXPECT_EQ(text.rfind("variant,parameter,psnr_db\nfuncnet,15,", 0), 0u) << text;
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
  EXPECT_EQ(run_cli({"ablate", "--config", (dir_ / "tiny.json").string(), "--variants", "resnet"}).code,
            cli::kConfigError);
}

}  // namespace
}  // namespace funcnet
