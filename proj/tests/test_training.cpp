#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "shapecon/binary_io.hpp"
#include "shapecon/error.hpp"
#include "shapecon/training.hpp"

using namespace shapecon;

namespace {

RunConfig small_config(LossKind loss, std::uint64_t seed) {
  RunConfig c;
  c.arch.widths = {3, 16, 16, 16, 16, 32, 16, 8};
  c.batch_size = 8;
  c.points_per_cloud = 64;
  c.lr = 1e-3;
  c.k = 6;
  c.epochs = 4;
  c.loss = loss;
  c.view = "chunk(cosine,64,24)";
  c.seed = seed;
  return c;
}

std::vector<PointCloud> small_clouds(std::uint64_t seed, std::size_t per_class = 4) {
  SynthSpec spec;
  spec.per_class = per_class;
  spec.n_points = 64;
  Rng rng(seed);
  const auto ds = synth_dataset(spec, rng);
  std::vector<PointCloud> clouds;
  for (const auto& inst : ds.instances) clouds.push_back(inst.cloud);
  return clouds;
}

}  // namespace

TEST(Config, ParseOverridesAndRejectsUnknownKeys) {
  const auto c = RunConfig::parse("# comment\nlr = 0.01\nloss = infonce\nlr = 0.02\nwidths = 3,4,4,4,4,8,4,2\n");
  EXPECT_EQ(c.lr, 0.02);
  EXPECT_EQ(c.loss, LossKind::infonce);
  EXPECT_EQ(c.arch.embedding_dim(), 2u);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(RunConfig::parse(c.to_text()).to_text(), c.to_text());
  RunConfig base;
  base.seed = 9;
  EXPECT_EQ(RunConfig::parse("epochs = 3\n", base).seed, 9u);
  try {
    RunConfig::parse("lr = 1\nbogus = 2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(RunConfig::parse("lr = abc\n"), ParseError);
  EXPECT_THROW(RunConfig::parse("loss = hinge\n"), ParseError);
  RunConfig bad;
  bad.tau = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Adam, HandComputedSteps) {
  EncoderArch arch;
  arch.widths = {3, 2, 2, 2, 2, 2, 2, 2};
  auto params = EncoderParams::zeros(arch);
  auto grads = EncoderParams::zeros(arch);
  auto state = AdamState::zeros(arch);
  grads.critic.assign(grads.critic.size(), 1.0);
  adam_step(params, grads, state, 0.1, 0.9, 0.999, 1e-8);
  for (double v : params.critic) EXPECT_NEAR(v, -0.1, 1e-8);
  // Untouched tensors stay at zero.
  EXPECT_EQ(params.layers[0].weight[0], 0.0);
  // A constant gradient keeps moving by lr per step after bias correction.
  for (int i = 0; i < 9; ++i) adam_step(params, grads, state, 0.1, 0.9, 0.999, 1e-8);
  for (double v : params.critic) EXPECT_NEAR(v, -1.0, 1e-6);
  EXPECT_EQ(state.step, 10u);
  const auto before = params;
  grads.critic[1] = NAN;
  try {
    adam_step(params, grads, state, 0.1, 0.9, 0.999, 1e-8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
  EXPECT_TRUE(params == before);
}

TEST(Training, ZeroLearningRateLeavesParameters) {
  auto config = small_config(LossKind::infonce, 1);
  config.lr = 0.0;
  const auto clouds = small_clouds(1);
  auto st = init_training(config, clouds.size());
  const auto before = st.params;
  train_epoch(clouds, st);
  EXPECT_TRUE(st.params == before);
  EXPECT_EQ(st.step, clouds.size() / config.batch_size);
}

TEST(Training, SingleInstanceRejected) {
  const auto clouds = small_clouds(2);
  for (auto loss : {LossKind::infonce, LossKind::nce}) {
    auto st = init_training(small_config(loss, 2), 1);
    EXPECT_THROW(train_epoch(std::span<const PointCloud>(clouds).first(1), st), Error);
  }
}

TEST(Training, LossDecreases) {
  for (auto loss : {LossKind::infonce, LossKind::nce}) {
    double first = 0.0, last = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto config = small_config(loss, seed);
      config.epochs = 30;
      config.early_stop_patience = 1000;
      // The NCE noise distribution shifts while the bank fills, so it needs
      // enough steps for the bank to settle.
      const auto clouds = small_clouds(seed, 8);
      auto st = init_training(config, clouds.size());
      train(clouds, st);
      ASSERT_EQ(st.epoch_losses.size(), 30u);
      first += st.epoch_losses[0] + st.epoch_losses[1];
      last += st.epoch_losses[28] + st.epoch_losses[29];
    }
    EXPECT_LT(last, first) << to_string(loss);
  }
}

TEST(Training, BankRowsStayUnitNorm) {
  const auto clouds = small_clouds(3);
  auto st = init_training(small_config(LossKind::nce, 3), clouds.size());
  train(clouds, st);
  for (std::size_t i = 0; i < st.bank.rows; ++i) {
    double s = 0.0;
    for (double v : st.bank.row(i)) s += v * v;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto clouds = small_clouds(4);
  auto st = init_training(small_config(LossKind::nce, 4), clouds.size());
  train_epoch(clouds, st);
  record_epoch(st, 1.5);
  const auto bytes = encode_checkpoint(st);
  const auto back = decode_checkpoint(bytes);
  EXPECT_TRUE(back == st);
  EXPECT_EQ(encode_checkpoint(back), bytes);

  auto message = [](const std::string& b) {
    try {
      decode_checkpoint(b);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(bytes.substr(0, bytes.size() - 5)).find("truncated"), std::string::npos);
  EXPECT_NE(message("XXXX" + bytes.substr(4)).find("not a checkpoint"), std::string::npos);
  EXPECT_NE(message(bytes + "x").find("trailing"), std::string::npos);
  std::string version(bytes);
  version[4] = 7;
  EXPECT_NE(message(version).find("unsupported checkpoint version"), std::string::npos);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto clouds = small_clouds(5);
  auto st = init_training(small_config(LossKind::infonce, 5), clouds.size());
  train_epoch(clouds, st);
  const auto dir = std::filesystem::temp_directory_path() / "shapecon_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "m.i3dc").string();
  save_checkpoint(path, st);
  EXPECT_TRUE(load_checkpoint(path) == st);
  std::filesystem::remove_all(dir);
}

TEST(Training, DeterministicAndResumable) {
  for (auto loss : {LossKind::infonce, LossKind::nce}) {
    const auto config = small_config(loss, 6);
    const auto clouds = small_clouds(6);
    auto a = init_training(config, clouds.size());
    auto b = init_training(config, clouds.size());
    train(clouds, a);
    train(clouds, b);
    EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));

    auto c = init_training(config, clouds.size());
    record_epoch(c, train_epoch(clouds, c));
    record_epoch(c, train_epoch(clouds, c));
    auto resumed = decode_checkpoint(encode_checkpoint(c));
    train(clouds, resumed);
    EXPECT_EQ(resumed.epoch, 4u);
    EXPECT_EQ(encode_checkpoint(resumed), encode_checkpoint(a)) << to_string(loss);
  }
}

TEST(Training, MaxStepsStopsMidEpoch) {
  auto config = small_config(LossKind::infonce, 7);
  config.max_steps = 3;
  const auto clouds = small_clouds(7, 8);  // 40 clouds, 5 steps per epoch
  auto st = init_training(config, clouds.size());
  train(clouds, st);
  EXPECT_EQ(st.step, 3u);
  EXPECT_EQ(st.epoch, 1u);
}

TEST(Views, AnchorRotationFollowsPreset) {
  RunConfig c;
  c.view = "unaligned";
  EXPECT_TRUE(c.anchor_rotates());
  c.view = "aligned-clustering";
  EXPECT_FALSE(c.anchor_rotates());
  c.anchor_so3 = "true";
  EXPECT_TRUE(c.anchor_rotates());
  const auto clouds = small_clouds(8);
  c = small_config(LossKind::nce, 8);
  c.encode_points = 32;
  const auto pair = make_views(clouds[0], c, c.view_spec(), 11);
  EXPECT_EQ(pair.anchor.size(), 32u);
  EXPECT_LE(pair.view.size(), 32u);
  const auto again = make_views(clouds[0], c, c.view_spec(), 11);
  EXPECT_EQ(pair.view, again.view);
}
