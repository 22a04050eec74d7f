#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "funcnet/errors.hpp"
#include "funcnet/parallel.hpp"
#include "funcnet/train.hpp"
#include "test_support.hpp"

namespace funcnet {
namespace {

namespace fs = std::filesystem;

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Reference Adam in double for one scalar sequence of gradients.
double adam_oracle(double w, const std::vector<double>& grads, double lr, double b1 = 0.9, double b2 = 0.999,
                   double eps = 1e-8) {
  double m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
    w -= lr * mh / (std::sqrt(vh) + eps);
  }
  return w;
}

struct ScalarParam {
  TensorF w{Shape{1}};
  AdamState state;
  ScalarParam(float value) {
    w[0] = value;
    state.m.emplace_back(Shape{1});
    state.v.emplace_back(Shape{1});
  }
  void step(float g, double lr) {
    std::vector<std::pair<std::string, TensorF*>> params{{"w", &w}};
    std::vector<TensorF> grads{TensorF(Shape{1})};
    grads[0][0] = g;
    adam_step(params, grads, state, AdamHyper{}, lr);
  }
};

TEST(Adam, FirstStepMovesByLearningRate) {
  ScalarParam p(1.0f);
  p.step(1.0f, 0.1);
  EXPECT_NEAR(p.w[0], 0.9, 1e-6);
  EXPECT_EQ(p.state.step, 1u);
}

TEST(Adam, MatchesReferenceSequence) {
  const std::vector<double> grads{0.5, -1.25, 2.0, 0.01, -0.3, 0.7, 1e-4, -2.5};
  ScalarParam p(0.3f);
  for (double g : grads) p.step(static_cast<float>(g), 0.01);
  EXPECT_NEAR(p.w[0], adam_oracle(0.3, grads, 0.01), 1e-6);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ScalarParam p(0.75f);
  for (int i = 0; i < 5; ++i) p.step(0.0f, 0.1);
  EXPECT_EQ(p.w[0], 0.75f);
}

TEST(Adam, NonFiniteGradientAbortsWithName) {
  ScalarParam p(0.5f);
  try {
    p.step(std::numeric_limits<float>::quiet_NaN(), 0.1);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("for w"), std::string::npos) << e.what();
  }
  EXPECT_EQ(p.w[0], 0.5f);
  EXPECT_EQ(p.state.step, 0u);
}

TEST(Schedule, StepDecay) {
  TrainConfig c;
  c.lr0 = 1e-4;
  c.decay_every = 8000;
  EXPECT_EQ(lr_at(c, 0), 1e-4);
  EXPECT_EQ(lr_at(c, 7999), 1e-4);
  EXPECT_EQ(lr_at(c, 8000), 5e-5);
  EXPECT_EQ(lr_at(c, 16000), 2.5e-5);
  EXPECT_EQ(lr_at(c, 19999), 2.5e-5);
}

class TrainFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("funcnet_train_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    manifest_ = testing::write_tiny_corpus(dir_ / "corpus");
    set_num_threads(1);
  }
  void TearDown() override {
    set_num_threads(1);
    fs::remove_all(dir_);
  }

  RunConfig tiny(const std::string& out) const {
    RunConfig c;
    c.width = 4;
    c.blocks = 1;
    c.train.batch_n = 4;
    c.train.levels_per_batch = 2;
    c.train.patch = 16;
    c.train.total_iters = 8;
    c.train.lr0 = 1e-3;
    c.data.manifest = manifest_;
    c.output.dir = dir_ / out;
    c.output.checkpoint_every = 3;
    c.output.validate_every = 4;
    return c;
  }

  fs::path dir_;
  fs::path manifest_;
};

TEST_F(TrainFixture, BatchLayout) {
  const RunConfig c = tiny("unused");
  const TrainData data = load_train_data(c);
  const PatchBatch b = make_batch(c.train, data.train, 5);
  EXPECT_EQ(b.clean.shape(), Shape({4, 3, 16, 16}));
  const auto levels = batch_levels(c.train, 5);
  ASSERT_EQ(levels.size(), 2u);
  EXPECT_EQ(b.parameters, (std::vector<double>{levels[0], levels[0], levels[1], levels[1]}));
  for (double x : levels) EXPECT_TRUE(x > 0.0 && x <= 75.0);
  EXPECT_NE(batch_levels(c.train, 6), levels);
}

TEST_F(TrainFixture, BatchIndependentOfThreadCount) {
  RunConfig c = tiny("unused");
  c.train.batch_n = 8;
  const TrainData data = load_train_data(c);
  set_num_threads(1);
  const PatchBatch a = make_batch(c.train, data.train, 3);
  set_num_threads(3);
  const PatchBatch b = make_batch(c.train, data.train, 3);
  EXPECT_EQ(a.clean.data().size(), b.clean.data().size());
  EXPECT_TRUE(std::equal(a.clean.data().begin(), a.clean.data().end(), b.clean.data().begin()));
  EXPECT_TRUE(std::equal(a.degraded.data().begin(), a.degraded.data().end(), b.degraded.data().begin()));
}

TEST_F(TrainFixture, DeblockPatchesAreAligned) {
  RunConfig c = tiny("unused");
  c.train.task = Task::Deblock;
  const TrainData data = load_train_data(c);
  const PatchBatch b = make_batch(c.train, data.train, 0);
  EXPECT_EQ(b.clean.shape()[1], 1u);
  for (const auto& o : b.origins) {
    EXPECT_EQ(o.y % 8, 0u);
    EXPECT_EQ(o.x % 8, 0u);
  }
  for (double q : b.parameters) EXPECT_TRUE(q >= 10.0 && q <= 80.0);
}

Model zero_plain(const RunConfig& c) {
  RunConfig pc = c;
  pc.model = ModelKind::Plain;
  Model m = initial_model(pc);
  for (auto& [name, t] : named_tensors(m)) *t = TensorF(t->shape());
  return m;
}

TEST_F(TrainFixture, CopyNetworkLossIsMeanAbsoluteNoise) {
  RunConfig c = tiny("unused");
  c.train.batch_n = 16;
  c.train.levels_per_batch = 4;
  c.train.patch = 32;
  const TrainData data = load_train_data(c);
  const Model copy = zero_plain(c);
  double loss = 0.0, expected = 0.0;
  for (std::size_t it = 0; it < 20; ++it) {
    const PatchBatch b = make_batch(c.train, data.train, it);
    loss += batch_loss(copy, b, 4);
    for (double s : batch_levels(c.train, it)) expected += s / 255.0 * std::sqrt(2.0 / std::numbers::pi) / 4.0;
  }
  EXPECT_NEAR(loss / expected, 1.0, 0.01);
}

TEST_F(TrainFixture, PerfectRestorationHasZeroLoss) {
  const RunConfig c = tiny("unused");
  const TrainData data = load_train_data(c);
  PatchBatch b = make_batch(c.train, data.train, 0);
  b.degraded = b.clean;
  const Model copy = zero_plain(c);
  EXPECT_EQ(batch_loss(copy, b, 2), 0.0);
  EXPECT_EQ(loss_and_grads(copy, b, 2).loss, 0.0);
}

TEST_F(TrainFixture, TapeLossMatchesInferenceLoss) {
  const RunConfig c = tiny("unused");
  const TrainData data = load_train_data(c);
  const Model m = initial_model(c);
  const PatchBatch b = make_batch(c.train, data.train, 1);
  EXPECT_NEAR(loss_and_grads(m, b, 2).loss, batch_loss(m, b, 2), 1e-5);
}

PatchBatch uniform_level_batch(const PatchBatch& b, double x) {
  PatchBatch out = b;
  std::fill(out.parameters.begin(), out.parameters.end(), x);
  return out;
}

TEST_F(TrainFixture, EndpointLevelsRouteGradientToOneSide) {
  const RunConfig c = tiny("unused");
  const TrainData data = load_train_data(c);
  const Model m = initial_model(c);
  const PatchBatch base = make_batch(c.train, data.train, 2);
  auto any_nonzero = [](const TensorF& t) {
    return std::any_of(t.data().begin(), t.data().end(), [](float v) { return v != 0.0f; });
  };
  auto all_zero = [&](const TensorF& t) { return !any_nonzero(t); };

  const StepResult at_a = loss_and_grads(m, uniform_level_batch(base, 0.0), 2);
  const StepResult at_b = loss_and_grads(m, uniform_level_batch(base, 75.0), 2);
  const StepResult mid = loss_and_grads(m, uniform_level_batch(base, 30.0), 2);
  bool a_moves = false, b_moves = false;
  for (std::size_t i = 0; i + 1 < at_a.grads.size(); i += 2) {
    EXPECT_TRUE(all_zero(at_a.grads[i + 1])) << "theta_b gradient at t=0, tensor " << i / 2;
    EXPECT_TRUE(all_zero(at_b.grads[i])) << "theta_a gradient at t=1, tensor " << i / 2;
    a_moves = a_moves || any_nonzero(mid.grads[i]);
    b_moves = b_moves || any_nonzero(mid.grads[i + 1]);
  }
  EXPECT_TRUE(a_moves);
  EXPECT_TRUE(b_moves);
}

TEST_F(TrainFixture, OneStepChangesBothEndpoints) {
  const RunConfig c = tiny("unused");
  const TrainData data = load_train_data(c);
  Model m = initial_model(c);
  const Model before = m;
  AdamState state = AdamState::zeros_like(m);
  static_cast<void>(train_step(m, state, c.train, data.train, 0));
  const auto now = named_tensors(m);
  const auto old = named_tensors(before);
  bool a_changed = false, b_changed = false;
  for (std::size_t i = 0; i < now.size(); ++i) {
    const bool changed = !std::equal(now[i].second->data().begin(), now[i].second->data().end(),
                                     old[i].second->data().begin());
    if (now[i].first.ends_with(".a")) a_changed = a_changed || changed;
    if (now[i].first.ends_with(".b")) b_changed = b_changed || changed;
  }
  EXPECT_TRUE(a_changed);
  EXPECT_TRUE(b_changed);
}

TEST_F(TrainFixture, LevelOrderDoesNotMatter) {
  const RunConfig c = tiny("unused");
  const TrainData data = load_train_data(c);
  const Model m = initial_model(c);
  const PatchBatch b = make_batch(c.train, data.train, 4);
  // Swap the two level blocks.
  PatchBatch s = b;
  const std::size_t half = b.clean.size() / 2;
  std::rotate(s.clean.data().begin(), s.clean.data().begin() + static_cast<std::ptrdiff_t>(half), s.clean.data().end());
  std::rotate(s.degraded.data().begin(), s.degraded.data().begin() + static_cast<std::ptrdiff_t>(half),
              s.degraded.data().end());
  std::rotate(s.parameters.begin(), s.parameters.begin() + 2, s.parameters.end());
  const StepResult r1 = loss_and_grads(m, b, 2);
  const StepResult r2 = loss_and_grads(m, s, 2);
  EXPECT_NEAR(r1.loss, r2.loss, 1e-6);
  for (std::size_t i = 0; i < r1.grads.size(); ++i) {
    for (std::size_t j = 0; j < r1.grads[i].size(); ++j) {
      EXPECT_NEAR(r1.grads[i][j], r2.grads[i][j], 1e-5 + 1e-4 * std::abs(r1.grads[i][j]));
    }
  }
}

TEST_F(TrainFixture, PlainModelTrainsUnderTheSameLoop) {
  RunConfig c = tiny("plain");
  c.model = ModelKind::Plain;
  const TrainData data = load_train_data(c);
  const Checkpoint ck = train_loop(c, data);
  EXPECT_EQ(ck.model.kind, ModelKind::Plain);
  EXPECT_EQ(ck.progress.iteration, 8u);
  EXPECT_TRUE(fs::exists(c.output.dir / "final.ckpt"));
}

TEST_F(TrainFixture, LoopWritesLogWithPeriodicValidation) {
  const RunConfig c = tiny("log");
  const TrainData data = load_train_data(c);
  static_cast<void>(train_loop(c, data));
  std::ifstream in(c.output.dir / "log.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iteration,loss,lr,val_psnr_15,val_psnr_35,val_psnr_75");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const bool validated = !line.ends_with(",,,");
    EXPECT_EQ(validated, rows % 4 == 0) << line;
  }
  EXPECT_EQ(rows, 8u);
}

TEST_F(TrainFixture, RunsAreReproducibleAcrossThreadCounts) {
  const RunConfig a = tiny("a");
  const RunConfig b = tiny("b");
  const TrainData data = load_train_data(a);
  set_num_threads(1);
  static_cast<void>(train_loop(a, data));
  set_num_threads(3);
  static_cast<void>(train_loop(b, data));
  EXPECT_EQ(file_bytes(a.output.dir / "final.ckpt"), file_bytes(b.output.dir / "final.ckpt"));
  EXPECT_EQ(file_bytes(a.output.dir / "log.csv"), file_bytes(b.output.dir / "log.csv"));
}

TEST_F(TrainFixture, ResumeIsBitwiseEqualToUninterruptedRun) {
  const RunConfig whole = tiny("whole");
  const RunConfig parts = tiny("parts");
  const TrainData data = load_train_data(whole);
  static_cast<void>(train_loop(whole, data));

  TrainOptions stop;
  stop.on_step = [](const LossReport& r) {
    if (r.iteration == 5) throw std::runtime_error("interrupted");
  };
  EXPECT_THROW(static_cast<void>(train_loop(parts, data, stop)), std::runtime_error);
  EXPECT_TRUE(fs::exists(parts.output.dir / "last.ckpt"));
  EXPECT_FALSE(fs::exists(parts.output.dir / "final.ckpt"));
  EXPECT_EQ(load_checkpoint(parts.output.dir / "last.ckpt").progress.iteration, 3u);

  static_cast<void>(train_loop(parts, data));
  EXPECT_EQ(file_bytes(whole.output.dir / "final.ckpt"), file_bytes(parts.output.dir / "final.ckpt"));
  EXPECT_EQ(file_bytes(whole.output.dir / "log.csv"), file_bytes(parts.output.dir / "log.csv"));
}

TEST_F(TrainFixture, FinishedRunIsReused) {
  const RunConfig c = tiny("reuse");
  const TrainData data = load_train_data(c);
  static_cast<void>(train_loop(c, data));
  std::size_t steps = 0;
  TrainOptions count;
  count.on_step = [&](const LossReport&) { ++steps; };
  const Checkpoint again = train_loop(c, data, count);
  EXPECT_EQ(steps, 0u);
  EXPECT_EQ(again.progress.iteration, 8u);
}

TEST_F(TrainFixture, DifferentConfigInSameDirectoryIsRejected) {
  RunConfig c = tiny("clash");
  const TrainData data = load_train_data(c);
  static_cast<void>(train_loop(c, data));
  c.train.seed = 2;
  EXPECT_THROW(static_cast<void>(train_loop(c, data)), ConfigError);
}

TEST_F(TrainFixture, DivergenceAborts) {
  RunConfig c = tiny("diverge");
  c.train.lr0 = 1.0;
  c.train.total_iters = 50;
  c.train.divergence_patience = 2;
  const TrainData data = load_train_data(c);
  EXPECT_THROW(static_cast<void>(train_loop(c, data)), DivergenceError);
}

TEST_F(TrainFixture, MissingImageIsDataError) {
  RunConfig c = tiny("missing");
  fs::remove(manifest_.parent_path() / "img0.ppm");
  EXPECT_THROW(static_cast<void>(load_train_data(c)), DataError);
}

TEST(ProbeLevels, PerTask) {
  EXPECT_EQ(probe_levels(Task::Denoise), (std::vector<double>{15, 35, 75}));
  EXPECT_EQ(probe_levels(Task::Deblock), (std::vector<double>{10, 20, 30, 40}));
}

}  // namespace
}  // namespace funcnet
