#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "sqcml/checkpoint.hpp"
#include "sqcml/train.hpp"

using namespace sqcml;
using namespace sqcml::surrogate;

namespace {

// Smooth synthetic sequences: rotating pairs at slightly different phases.
dataset::SequenceDataset toy_dataset(std::size_t n_train, std::size_t n_val, std::size_t L, Index D) {
  dataset::SequenceDataset ds;
  ds.seq_len = L;
  ds.dim = static_cast<std::size_t>(D);
  auto make = [&](double phase) {
    dataset::Sequence s(static_cast<Index>(L), D);
    for (Index t = 0; t < s.rows(); ++t)
      for (Index k = 0; k < D; ++k)
        s(t, k) = 0.8 * std::cos(phase + 0.3 * static_cast<double>(t) + 0.7 * static_cast<double>(k));
    return s;
  };
  for (std::size_t i = 0; i < n_train; ++i) ds.train.push_back(make(0.1 * static_cast<double>(i)));
  for (std::size_t i = 0; i < n_val; ++i) ds.validation.push_back(make(0.05 + 0.1 * static_cast<double>(i)));
  return ds;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.seq_len = 5;
  cfg.hidden = 8;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 50;
  cfg.epochs = 20;
  cfg.seed = 4;
  return cfg;
}

}  // namespace

TEST(Train, ZeroLearningRateKeepsInitialization) {
  const auto ds = toy_dataset(10, 0, 5, 4);
  auto cfg = tiny_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const auto r = train(ds, cfg);
  EXPECT_TRUE(r.params == init_params(4, 8, cfg.seed));
  EXPECT_EQ(r.report.train_loss.size(), 1u);
  EXPECT_TRUE(std::isnan(r.report.validation_loss[0]));
}

TEST(Train, OverfitsSingleRepeatedSequenceMonotonically) {
  auto ds = toy_dataset(1, 0, 5, 4);
  ds.train.assign(50, ds.train.front());
  auto cfg = tiny_config();
  cfg.epochs = 50;
  const auto r = train(ds, cfg);
  for (std::size_t e = 1; e < r.report.train_loss.size(); ++e)
    EXPECT_LT(r.report.train_loss[e], r.report.train_loss[e - 1]) << "epoch " << e;
  EXPECT_LT(r.report.train_loss.back(), 0.5 * r.report.train_loss.front());
}

TEST(Train, DeterministicPerSeed) {
  const auto ds = toy_dataset(120, 30, 5, 4);
  const auto a = train(ds, tiny_config());
  const auto b = train(ds, tiny_config());
  EXPECT_TRUE(a.report == b.report);
  EXPECT_TRUE(a.params == b.params);
  auto cfg = tiny_config();
  cfg.seed = 5;
  EXPECT_FALSE(train(ds, cfg).report == a.report);
}

TEST(Train, ReturnsBestValidationEpoch) {
  const auto ds = toy_dataset(120, 30, 5, 4);
  const auto r = train(ds, tiny_config());
  const auto& v = r.report.validation_loss;
  const auto best = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
  EXPECT_EQ(r.report.best_epoch, best);
  EXPECT_DOUBLE_EQ(evaluate_loss(ds.validation, 5, r.params), v[best]);
  for (double x : r.report.train_loss) EXPECT_GE(x, 0.0);
}

TEST(Train, CallbackSeesEveryEpoch) {
  const auto ds = toy_dataset(20, 5, 5, 4);
  std::vector<std::size_t> seen;
  train(ds, tiny_config(), [&](std::size_t e, double, double) { seen.push_back(e); });
  ASSERT_EQ(seen.size(), 20u);
  EXPECT_EQ(seen.back(), 19u);
}

TEST(Train, NonFiniteLossAbortsWithContext) {
  auto ds = toy_dataset(120, 0, 5, 4);
  ds.train[70].setConstant(1e300);
  auto cfg = tiny_config();
  try {
    train(ds, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 0u);
    EXPECT_LT(e.batch(), 3u);
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
}

TEST(Train, InvalidConfigurationRejected) {
  const auto ds = toy_dataset(10, 0, 5, 4);
  auto cfg = tiny_config();
  cfg.seq_len = 6;
  EXPECT_THROW(train(ds, cfg), std::invalid_argument);
  cfg = tiny_config();
  cfg.batch_size = 0;
  EXPECT_THROW(train(ds, cfg), std::invalid_argument);
  EXPECT_THROW(train(toy_dataset(0, 3, 5, 4), tiny_config()), std::invalid_argument);
}

TEST(Checkpoint, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "sqcml_ck_test.ckpt";
  for (std::size_t n_val : {0u, 10u}) {
    const auto ds = toy_dataset(30, n_val, 5, 4);
    auto cfg = tiny_config();
    cfg.epochs = 3;
    const auto r = train(ds, cfg);
    Checkpoint ck{r.params, cfg, r.report, {"feedbeef", 17}, std::nullopt};
    save_checkpoint(path, ck);
    const auto back = load_checkpoint(path);
    EXPECT_TRUE(back.params == ck.params);
    EXPECT_TRUE(back.report == ck.report);
    EXPECT_EQ(back.report.wall_seconds, ck.report.wall_seconds);
    EXPECT_EQ(back.config.seq_len, 5u);
    EXPECT_EQ(back.config.hidden, 8u);
    EXPECT_EQ(back.config.learning_rate, cfg.learning_rate);
    EXPECT_EQ(back.config.seed, cfg.seed);
    EXPECT_EQ(back.data.source_hash, "feedbeef");
    EXPECT_EQ(back.data.split_seed, 17u);
    EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, DistinctErrors) {
  Checkpoint ck{init_params(4, 3, 1), tiny_config(), {}, {}, std::nullopt};
  ck.config.hidden = 3;
  const auto bytes = encode_checkpoint(ck);
  auto code = [](const std::string& b) {
    try {
      decode_checkpoint(b);
    } catch (const io::IoError& e) {
      return e.code();
    }
    return io::Errc::open_failed;
  };
  EXPECT_EQ(code(bytes.substr(0, bytes.size() - 3)), io::Errc::truncated);

  auto d = io::decode(kCheckpointMagic, bytes);
  d.header["format_version"] = 2;
  EXPECT_EQ(code(io::encode(kCheckpointMagic, d.header, d.payload)), io::Errc::version_mismatch);

  const auto back = decode_checkpoint(bytes);
  EXPECT_NO_THROW(require_dim(back, 4));
  try {
    require_dim(back, 36);
    FAIL();
  } catch (const io::IoError& e) {
    EXPECT_EQ(e.code(), io::Errc::dimension_mismatch);
  }
  EXPECT_EQ(code(dataset::encode_dataset(dataset::SequenceDataset{5, 4, {}, {}, {}, std::nullopt})),
            io::Errc::bad_magic);
}
