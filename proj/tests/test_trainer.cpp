#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "udae/adam.hpp"
#include "udae/degrade.hpp"
#include "udae/scenes.hpp"
#include "udae/trainer.hpp"

using namespace udae;
namespace fs = std::filesystem;

namespace {

std::vector<ImagePair> make_pairs(int count, std::int64_t size, std::uint64_t seed,
                                  Preset preset = Preset::Mixed) {
  std::vector<ImagePair> pairs;
  for (int i = 0; i < count; ++i) {
    ImagePair p;
    p.id = "p" + std::to_string(i);
    p.clean = generate_clean_scene(mix_seed(seed, static_cast<std::uint64_t>(i)), size);
    p.params = sample_params(mix_seed(seed ^ 0xABCD, static_cast<std::uint64_t>(i)), preset);
    p.distorted = degrade(p.clean, p.params);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

bool models_bit_equal(const ModelWeights &a, const ModelWeights &b) {
  if (a.layers.size() != b.layers.size())
    return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    for (std::int64_t k = 0; k < a.layers[i].weights.size(); ++k)
      if (a.layers[i].weights.data()[k] != b.layers[i].weights.data()[k])
        return false;
    if (a.layers[i].bias != b.layers[i].bias)
      return false;
  }
  return true;
}

TEST(AdamUpdate, ZeroGradientLeavesParamsUntouched) {
  // no weight decay anywhere: zero gradient must mean zero movement
  std::vector<float> params = {0.5f, -1.25f, 3.0f};
  const std::vector<float> snapshot = params;
  std::vector<float> grads = {0.0f, 0.0f, 0.0f};
  std::vector<float> m(3, 0.0f), v(3, 0.0f);
  AdamConfig cfg;
  for (std::int64_t t = 1; t <= 10; ++t)
    adam_update(params, grads, m, v, t, cfg);
  EXPECT_EQ(params, snapshot);
}

TEST(AdamUpdate, FirstStepMatchesClosedForm) {
  // g = 1 constant: bias correction gives m_hat = v_hat = 1, so the first
  // step is -lr / (1 + eps) which is -lr to float precision
  std::vector<float> params = {1.0f};
  std::vector<float> grads = {1.0f};
  std::vector<float> m(1, 0.0f), v(1, 0.0f);
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  adam_update(params, grads, m, v, 1, cfg);
  EXPECT_NEAR(params[0], 1.0f - 1e-3f, 1e-8);
}

TEST(AdamState, ShapesMirrorParameters) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 2;
  ModelWeights model = build_model(cfg, 0);
  AdamState s = make_adam_state(model);
  ASSERT_EQ(s.weight_slots.size(), model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    EXPECT_EQ(s.weight_slots[i].m.size(),
              static_cast<std::size_t>(model.layers[i].weights.size()));
    EXPECT_EQ(s.bias_slots[i].v.size(), model.layers[i].bias.size());
  }
  EXPECT_EQ(s.t, 0);
}

TEST(AdamState, SidecarRoundTrips) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 2;
  ModelWeights model = build_model(cfg, 4);
  AdamState s = make_adam_state(model);
  s.t = 17;
  s.weight_slots[0].m[0] = 0.25f;
  s.bias_slots[2].v[1] = -1.5f;
  const fs::path path = fs::temp_directory_path() / "udae_adam_test.adam";
  save_adam_state(s, path);
  AdamState r = load_adam_state(path);
  EXPECT_EQ(r.t, 17);
  EXPECT_EQ(r.weight_slots[0].m[0], 0.25f);
  EXPECT_EQ(r.bias_slots[2].v[1], -1.5f);
  fs::remove(path);
}

TEST(Train, ZeroEpochsReturnsInputWeightsBitExact) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 2;
  ModelWeights model = build_model(cfg, 5);
  auto pairs = make_pairs(2, 16, 1);
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 1;
  auto result = train(model, pairs, {}, tc);
  EXPECT_TRUE(models_bit_equal(result.weights, model));
  EXPECT_TRUE(result.history.records.empty());
}

TEST(Train, SameSeedGivesIdenticalLossCurves) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 4;
  ModelWeights model = build_model(cfg, 6);
  auto pairs = make_pairs(6, 16, 2);
  auto val = make_pairs(2, 16, 3);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.seed = 42;
  auto r1 = train(model, pairs, val, tc);
  auto r2 = train(model, pairs, val, tc);
  ASSERT_EQ(r1.history.records.size(), r2.history.records.size());
  for (std::size_t i = 0; i < r1.history.records.size(); ++i) {
    EXPECT_EQ(r1.history.records[i].train_loss, r2.history.records[i].train_loss);
    EXPECT_EQ(r1.history.records[i].val_loss, r2.history.records[i].val_loss);
  }
  EXPECT_TRUE(models_bit_equal(r1.weights, r2.weights));
}

TEST(Train, LossDecreasesOnTinyOverfit) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 4;
  ModelWeights model = build_model(cfg, 7);
  auto pairs = make_pairs(1, 16, 4, Preset::Greenish);
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 1;
  tc.seed = 9;
  auto result = train(model, pairs, {}, tc);
  const auto &rec = result.history.records;
  ASSERT_GE(rec.size(), 40u);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 5; ++i)
    early += rec[static_cast<std::size_t>(i)].train_loss;
  for (int i = 0; i < 5; ++i)
    late += rec[rec.size() - 2 - static_cast<std::size_t>(i)].train_loss;
  EXPECT_LT(late, early * 0.8) << "loss should shrink on a single-pair overfit";
}

TEST(Train, WeightsForZeroedInputChannelNeverMove) {
  // the red channel of every training image is identically zero, so the
  // first-layer weights reading it get exactly zero gradient; any decay term
  // would still shrink them, so bit-equality asserts its absence structurally
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 4;
  ModelWeights model = build_model(cfg, 8);
  auto pairs = make_pairs(2, 16, 5);
  for (auto &p : pairs) {
    std::fill(p.distorted.plane(0, 0), p.distorted.plane(0, 0) + 16 * 16, 0.0f);
  }
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 1;
  tc.seed = 11;
  auto result = train(model, pairs, {}, tc);
  bool others_moved = false;
  for (std::int64_t oc = 0; oc < 4; ++oc)
    for (std::int64_t kh = 0; kh < 3; ++kh)
      for (std::int64_t kw = 0; kw < 3; ++kw) {
        EXPECT_EQ(result.weights.layers[0].weights.at(oc, 0, kh, kw),
                  model.layers[0].weights.at(oc, 0, kh, kw))
            << "weight on the zero channel moved";
        others_moved |= result.weights.layers[0].weights.at(oc, 1, kh, kw) !=
                        model.layers[0].weights.at(oc, 1, kh, kw);
      }
  EXPECT_TRUE(others_moved) << "training should have updated live-channel weights";
}

TEST(Train, ResumeFromCheckpointMatchesUninterruptedRun) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 4;
  ModelWeights model = build_model(cfg, 10);
  auto pairs = make_pairs(4, 16, 6);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 2;
  tc.seed = 77;

  auto full = train(model, pairs, {}, tc);

  TrainConfig tc_half = tc;
  tc_half.epochs = 2;
  auto half = train(model, pairs, {}, tc_half);
  // round-trip the state through the sidecar files, as a real resume would
  const fs::path wpath = fs::temp_directory_path() / "udae_resume_test.udae";
  const fs::path apath = fs::temp_directory_path() / "udae_resume_test.adam";
  save_weights(half.weights, wpath);
  save_adam_state(half.adam, apath);
  ModelWeights reloaded = load_weights(wpath);
  AdamState adam = load_adam_state(apath);
  auto resumed = train(reloaded, pairs, {}, tc, 2, &adam);
  fs::remove(wpath);
  fs::remove(apath);

  const double full_final = full.history.records.back().train_loss;
  const double resumed_final = resumed.history.records.back().train_loss;
  EXPECT_NEAR(resumed_final, full_final, 1e-5);
  EXPECT_TRUE(models_bit_equal(resumed.weights, full.weights));
}

TEST(Train, CheckpointScheduleWritesLoadableFiles) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 2;
  ModelWeights model = build_model(cfg, 13);
  auto pairs = make_pairs(2, 16, 9);
  TrainConfig tc;
  tc.epochs = 4;
  tc.checkpoint_every = 2;
  tc.checkpoint_dir = fs::temp_directory_path() / "udae_ckpt_sched";
  fs::remove_all(tc.checkpoint_dir);
  auto result = train(model, pairs, {}, tc);
  EXPECT_TRUE(fs::exists(tc.checkpoint_dir / "epoch_0002.udae"));
  EXPECT_TRUE(fs::exists(tc.checkpoint_dir / "epoch_0004.udae"));
  EXPECT_TRUE(fs::exists(tc.checkpoint_dir / "epoch_0004.adam"));
  EXPECT_FALSE(fs::exists(tc.checkpoint_dir / "epoch_0003.udae"));
  // the last scheduled checkpoint equals the returned weights
  ModelWeights last = load_weights(tc.checkpoint_dir / "epoch_0004.udae");
  EXPECT_TRUE(models_bit_equal(last, result.weights));
  fs::remove_all(tc.checkpoint_dir);
}

TEST(Train, NonFiniteLossAbortsWithDiagnostic) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 2;
  ModelWeights model = build_model(cfg, 12);
  // poison the final projection: a NaN there survives the sigmoid into the
  // loss, while earlier layers would have it swallowed by relu's max-with-0
  model.layers.back().weights.data()[0] = std::nanf("");
  auto pairs = make_pairs(1, 16, 8);
  TrainConfig tc;
  tc.epochs = 1;
  try {
    train(model, pairs, {}, tc);
    FAIL() << "expected divergence abort";
  } catch (const std::runtime_error &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("non-finite loss at step 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("norms"), std::string::npos) << msg;
  }
}

TEST(Train, RejectsEmptyDataset) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 2;
  ModelWeights model = build_model(cfg, 0);
  TrainConfig tc;
  EXPECT_THROW(train(model, {}, {}, tc), std::invalid_argument);
}

TEST(Train, ValidatesConfig) {
  TrainConfig tc;
  tc.learning_rate = 0.0;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
  tc = {};
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
  tc = {};
  tc.alpha = -0.1;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
}

TEST(Train, ImageSizeGuardRejectsWrongSizes) {
  UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 2;
  ModelWeights model = build_model(cfg, 1);
  auto pairs = make_pairs(1, 16, 7);
  TrainConfig tc;
  tc.image_size = 32;
  EXPECT_THROW(train(model, pairs, {}, tc), std::invalid_argument);
}

TEST(LossHistory, CsvHasHeaderAndRows) {
  LossHistory h;
  h.records.push_back({0, 0, 0.5, 0.0, false});
  h.records.push_back({0, 1, 0.25, 0.4, true});
  const fs::path path = fs::temp_directory_path() / "udae_loss_test.csv";
  h.save_csv(path);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "epoch,step,train_loss,val_loss");
  std::getline(f, line);
  EXPECT_EQ(line, "0,0,0.5,");
  std::getline(f, line);
  EXPECT_EQ(line, "0,1,0.25,0.4");
  fs::remove(path);
}

} // namespace
