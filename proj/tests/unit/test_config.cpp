#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "funcnet/config.hpp"
#include "funcnet/errors.hpp"

namespace funcnet {
namespace {

TEST(Config, DefaultsValidate) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.effective_map(), MapKind::Identity);
  c.train.task = Task::Deblock;
  EXPECT_EQ(c.effective_map(), MapKind::JpegScale);
  EXPECT_TRUE(c.train.align8());
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = run_config_from_json(Json::object());
  const RunConfig d;
  EXPECT_EQ(training_echo(c), training_echo(d));
}

TEST(Config, RejectsUnknownKeysWithPath) {
  try {
    static_cast<void>(run_config_from_json(Json::parse(R"({"train": {"lr": 0.1}})")));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lr"), std::string::npos) << e.what();
  }
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"extra": 1})"))), ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"network": {"depth": 3}})"))), ConfigError);
}

TEST(Config, RejectsWrongTypes) {
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"train": {"batch_n": "16"}})"))), ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"train": {"batch_n": -4}})"))), ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"train": {"lr0": true}})"))), ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"model": 3})"))), ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"([1, 2])"))), ConfigError);
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"model": "resnet"})"))), ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"train": {"task": "sr"}})"))), ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"train": {"levels_per_batch": 3}})"))),
               ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"train": {"beta1": 0.9999}})"))), ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"train": {"lr0": 0}})"))), ConfigError);
  EXPECT_THROW(
      static_cast<void>(run_config_from_json(Json::parse(R"({"train": {"task": "deblock", "patch": 36}})"))),
      ConfigError);
  EXPECT_THROW(static_cast<void>(run_config_from_json(Json::parse(R"({"model": "plain", "network": {"map": "identity"}})"))),
               ConfigError);
}

TEST(Config, FullRoundTrip) {
  RunConfig c;
  c.model = ModelKind::FuncNet;
  c.map = MapKind::LearnedMlp;
  c.width = 16;
  c.blocks = 2;
  c.train.task = Task::Deblock;
  c.train.lr0 = 3e-4;
  c.train.total_iters = 123;
  c.train.seed = 99;
  c.data.manifest = "/tmp/some/manifest.csv";
  c.output.dir = "/tmp/out";
  c.output.checkpoint_every = 7;
  const Json doc = to_json(c);
  const RunConfig back = run_config_from_json(doc);
  EXPECT_EQ(to_json(back), doc);
  EXPECT_EQ(back.map, MapKind::LearnedMlp);
  EXPECT_EQ(back.train.total_iters, 123u);
}

TEST(Config, EchoOmitsLocation) {
  RunConfig a;
  RunConfig b;
  b.output.dir = "/elsewhere";
  b.data.manifest = "/other.csv";
  EXPECT_EQ(training_echo(a), training_echo(b));
  b.train.seed = 2;
  EXPECT_NE(training_echo(a), training_echo(b));
}

TEST(Config, RelativeManifestResolvesAgainstFile) {
  const auto dir = std::filesystem::temp_directory_path() / "funcnet_config_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "run.json";
  {
    std::ofstream out(path);
    out << R"({"data": {"manifest": "corpus/m.csv"}, "train": {"total_iters": 5}})";
  }
  const RunConfig c = load_run_config(path);
  EXPECT_EQ(c.data.manifest, dir / "corpus/m.csv");
  EXPECT_EQ(c.train.total_iters, 5u);
  std::filesystem::remove_all(dir);
}

TEST(Config, LoadErrors) {
  EXPECT_THROW(static_cast<void>(load_run_config("/nonexistent/run.json")), ConfigError);
  const auto path = std::filesystem::temp_directory_path() / "funcnet_bad.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  EXPECT_THROW(static_cast<void>(load_run_config(path)), ConfigError);
  std::filesystem::remove(path);
}

TEST(Config, NetworkDescriptionRoundTrip) {
  const NetworkConfig n = default_backbone(3, ParamDomain(0.0, 75.0), MapKind::Identity, 8, 2);
  EXPECT_EQ(network_config_from_json(to_json(n)), n);
  Json broken = to_json(n);
  broken["layers"][0]["kind"] = "pool";
  EXPECT_THROW(static_cast<void>(network_config_from_json(broken)), ConfigError);
  broken = to_json(n);
  broken.erase("map");
  EXPECT_THROW(static_cast<void>(network_config_from_json(broken)), ConfigError);
}

TEST(Config, TrainSectionRoundTrip) {
  TrainConfig t;
  t.decay_every = 17;
  t.levels_per_batch = 8;
  EXPECT_EQ(to_json(train_config_from_json(to_json(t))), to_json(t));
}

}  // namespace
}  // namespace funcnet
