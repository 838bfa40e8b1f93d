#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "patchcraft/errors.hpp"
#include "patchcraft/trainer.hpp"
#include "support.hpp"

namespace patchcraft {
namespace {

using testing::random_tensor;
using testing::ScalarAdam;
using testing::TempDir;
using testing::tiny_config;

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  const Tensor logits = Tensor::zeros({2, 4});
  const std::vector<std::size_t> labels{0, 3};
  EXPECT_NEAR(cross_entropy(logits, labels).item(), std::log(4.0), 1e-6);
}

TEST(CrossEntropy, ConfidentCorrectLogitGivesNearZero) {
  const Tensor logits({1, 3}, {20.0f, 0.0f, 0.0f});
  const std::vector<std::size_t> labels{0};
  EXPECT_LT(cross_entropy(logits, labels).item(), 1e-3);
}

TEST(CrossEntropy, MatchesNaiveOracleAndIsNonNegative) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t batch = 1 + rng.below(5);
    const std::size_t classes = 2 + rng.below(5);
    const Tensor logits = random_tensor({batch, classes}, rng, -4.0, 4.0);
    std::vector<std::size_t> labels(batch);
    for (auto& l : labels) {
      l = rng.below(classes);
    }
    const float loss = cross_entropy(logits, labels).item();
    EXPECT_GE(loss, 0.0f);
    EXPECT_NEAR(loss, testing::reference_cross_entropy(logits, labels), 1e-5);
  }
}

TEST(CrossEntropy, LargeLogitsStayFinite) {
  const Tensor logits({1, 2}, {1000.0f, -1000.0f});
  const std::vector<std::size_t> labels{1};
  EXPECT_NEAR(cross_entropy(logits, labels).item(), 2000.0f, 1e-2);
}

TEST(CrossEntropy, LabelOutOfRangeIsAnInputError) {
  const std::vector<std::size_t> labels{4};
  EXPECT_THROW(cross_entropy(Tensor::zeros({1, 4}), labels), InputError);
  const std::vector<std::size_t> short_labels{0};
  EXPECT_THROW(cross_entropy(Tensor::zeros({2, 4}), short_labels), DimensionError);
}

TrainConfig adam_config(float lr, float wd) {
  TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.weight_decay = wd;
  return cfg;
}

TEST(Adam, FirstStepMovesByLearningRateAgainstTheGradientSign) {
  std::vector<Tensor> params{Tensor({4}, {1.0f, -2.0f, 0.5f, 3.0f})};
  params[0].set_requires_grad(true);
  const std::vector<float> g{0.3f, -5.0f, 1e-3f, -1e-2f};
  std::copy(g.begin(), g.end(), params[0].mutable_grad().begin());
  auto state = AdamState<float>::like(params);
  const std::vector<float> before(params[0].data().begin(), params[0].data().end());
  adam_step<float>(params, state, adam_config(0.01f, 0.0f));
  EXPECT_EQ(state.step, 1u);
  for (std::size_t i = 0; i < 4; ++i) {
    const float sign = g[i] > 0 ? 1.0f : -1.0f;
    EXPECT_NEAR(params[0][i], before[i] - 0.01f * sign, 1e-5);
  }
}

TEST(Adam, ZeroGradientAndZeroRateLeaveParamsAlone) {
  std::vector<Tensor> params{Tensor({3}, {1.0f, 2.0f, 3.0f})};
  params[0].set_requires_grad(true);
  auto state = AdamState<float>::like(params);
  adam_step<float>(params, state, adam_config(0.1f, 0.0f));
  EXPECT_EQ(params[0][1], 2.0f);

  std::fill(params[0].mutable_grad().begin(), params[0].mutable_grad().end(), 0.7f);
  TrainConfig frozen = adam_config(0.0f, 0.5f);
  // lr = 0 is rejected by validate() for training, but the step itself is the identity.
  adam_step<float>(params, state, frozen);
  EXPECT_EQ(params[0][0], 1.0f);
  EXPECT_EQ(params[0][2], 3.0f);
}

TEST(Adam, QuadraticDescentMatchesScalarRecurrence) {
  // f(theta) = theta^2 from theta = 1 with lr = 0.1.
  std::vector<Tensor64> params{Tensor64({1}, {1.0}, true)};
  auto state = AdamState<double>::like(params);
  const TrainConfig cfg = adam_config(0.1f, 0.0f);
  ScalarAdam oracle{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, 0.0};
  double theta = 1.0;
  double previous = 1.0;
  for (int step = 0; step < 10; ++step) {
    params[0].mutable_grad()[0] = 2.0 * params[0][0];
    adam_step<double>(params, state, cfg);
    theta = oracle.step(theta, 2.0 * theta);
    EXPECT_NEAR(params[0][0], theta, 1e-12);
    EXPECT_LT(std::abs(params[0][0]), std::abs(previous));
    previous = params[0][0];
  }
}

TEST(Adam, TwentyStepsMatchOracleWithWeightDecay) {
  Rng rng(3);
  const TrainConfig cfg = adam_config(0.01f, 0.05f);
  std::vector<Tensor> params{random_tensor({6}, rng), random_tensor({2, 3}, rng)};
  for (auto& p : params) {
    p.set_requires_grad(true);
  }
  auto state = AdamState<float>::like(params);
  std::vector<ScalarAdam> oracles(12, ScalarAdam{cfg.learning_rate, cfg.adam_beta1,
                                                 cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay});
  std::vector<double> theta;
  for (const auto& p : params) {
    theta.insert(theta.end(), p.data().begin(), p.data().end());
  }
  for (int step = 0; step < 20; ++step) {
    std::size_t k = 0;
    for (auto& p : params) {
      for (auto& g : p.mutable_grad()) {
        g = static_cast<float>(rng.uniform(-1.0, 1.0));
        // Parameters live in f32, so the oracle rounds its state the same way.
        theta[k] = static_cast<float>(oracles[k].step(theta[k], g));
        ++k;
      }
    }
    adam_step<float>(params, state, cfg);
  }
  std::size_t k = 0;
  for (const auto& p : params) {
    for (float v : p.data()) {
      EXPECT_NEAR(v, theta[k++], 1e-6);
    }
  }
}

TEST(Adam, MismatchedStateIsAContractError) {
  std::vector<Tensor> params{Tensor::zeros({3})};
  auto state = AdamState<float>::like(params);
  std::vector<Tensor> other{Tensor::zeros({4})};
  EXPECT_THROW(adam_step<float>(other, state, adam_config(0.1f, 0.0f)), ContractError);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.learning_rate = 0.0f;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(TrainConfig{}.learning_rate, 1e-4f);
  EXPECT_EQ(TrainConfig{}.epochs, 25u);
}

TEST(Accuracy, CountsArgmaxMatchesWithLowIndexTies) {
  const Tensor logits({4, 3}, {3, 1, 0,   //
                               0, 2, 1,   //
                               1, 1, 1,   //
                               0, 5, 9});
  EXPECT_EQ(predict_classes(logits), (std::vector<std::size_t>{0, 1, 0, 2}));
  const std::vector<std::size_t> all{0, 1, 0, 2};
  EXPECT_DOUBLE_EQ(sparse_categorical_accuracy(logits, all), 1.0);
  const std::vector<std::size_t> three{0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(sparse_categorical_accuracy(logits, three), 0.75);
  const std::vector<std::size_t> balanced{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(sparse_categorical_accuracy(Tensor::zeros({4, 4}), balanced), 0.25);
}

TEST(Accuracy, InvariantUnderMonotoneRowTransforms) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor logits = random_tensor({8, 5}, rng, -3.0, 3.0);
    std::vector<std::size_t> labels(8);
    for (auto& l : labels) {
      l = rng.below(5);
    }
    std::vector<float> warped(logits.data().begin(), logits.data().end());
    for (auto& v : warped) {
      v = std::exp(v) * 2.0f + 1.0f;
    }
    EXPECT_DOUBLE_EQ(sparse_categorical_accuracy(Tensor({8, 5}, warped), labels),
                     sparse_categorical_accuracy(logits, labels));
  }
}

class TrainFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("trainer");
    testing::write_flat_color_dataset(dir_->path());
    data_ = new Dataset(load_dataset(dir_->path()));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete dir_;
  }
  static const Dataset& data() { return *data_; }

 private:
  static inline TempDir* dir_ = nullptr;
  static inline Dataset* data_ = nullptr;
};

TEST_F(TrainFixture, EvaluateWithZeroModelPicksClassZero) {
  const ViTConfig c = tiny_config(4, {8});
  const auto params = ViTParams<float>::zeros(c);
  const PreparedSet prepared = prepare(data(), 16);
  const NormStats stats = compute_norm_stats(prepared.images);
  EXPECT_DOUBLE_EQ(evaluate(params, c, prepared, stats), 0.25);
}

TEST_F(TrainFixture, OneStepPerEpochWhenTheBatchHoldsEverything) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  const Dataset empty{{}, data().class_names, 0};
  const TrainResult r = train(tiny_config(4, {16}), cfg, data(), empty);
  EXPECT_EQ(r.report.optimizer_steps, 1u);
  EXPECT_EQ(r.report.epochs.size(), 1u);
  EXPECT_FALSE(r.report.test_accuracy.has_value());

  cfg.batch_size = 5;  // 32 images -> 7 batches, last one partial
  EXPECT_EQ(train(tiny_config(4, {16}), cfg, data(), empty).report.optimizer_steps, 7u);
}

TEST_F(TrainFixture, SameSeedSameParamsBitwise) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 5;
  const auto [train_set, test_set] = stratified_split(data(), 0.25, 5);
  const TrainResult a = train(tiny_config(4, {16}), cfg, train_set, test_set);
  const TrainResult b = train(tiny_config(4, {16}), cfg, train_set, test_set);
  const auto na = a.params.named_tensors();
  const auto nb = b.params.named_tensors();
  for (std::size_t i = 0; i < na.size(); ++i) {
    EXPECT_TRUE(std::equal(na[i].tensor.data().begin(), na[i].tensor.data().end(),
                           nb[i].tensor.data().begin()))
        << na[i].name;
  }
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a.report.epochs[e].mean_loss, b.report.epochs[e].mean_loss);
  }
  ASSERT_TRUE(a.report.test_accuracy.has_value());
  EXPECT_EQ(*a.report.test_accuracy, *b.report.test_accuracy);

  cfg.seed = 6;
  const TrainResult c = train(tiny_config(4, {16}), cfg, train_set, test_set);
  EXPECT_NE(c.report.epochs[0].mean_loss, a.report.epochs[0].mean_loss);
}

TEST_F(TrainFixture, LossFallsOverTenEpochsAndReportIsWellFormed) {
  TrainConfig cfg;
  cfg.epochs = 10;
  const Dataset empty{{}, data().class_names, 0};
  const TrainResult r = train(tiny_config(), cfg, data(), empty);
  ASSERT_EQ(r.report.epochs.size(), 10u);
  EXPECT_LT(r.report.epochs[9].mean_loss, r.report.epochs[0].mean_loss);
  for (const auto& e : r.report.epochs) {
    EXPECT_GE(e.train_accuracy, 0.0);
    EXPECT_LE(e.train_accuracy, 1.0);
  }
  EXPECT_GE(r.report.final_train_accuracy, 0.0);
  EXPECT_LE(r.report.final_train_accuracy, 1.0);
  EXPECT_EQ(r.report.model_config, tiny_config());
  EXPECT_EQ(r.report.train_config, cfg);
}

TEST_F(TrainFixture, DivergenceIsReportedWithEpochAndBatch) {
  TrainConfig cfg;
  cfg.learning_rate = 1e30f;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  const Dataset empty{{}, data().class_names, 0};
  try {
    train(tiny_config(4, {16}), cfg, data(), empty);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST_F(TrainFixture, ClassCountMismatchIsAConfigError) {
  const Dataset empty{{}, data().class_names, 0};
  EXPECT_THROW(train(tiny_config(3, {8}), TrainConfig{}, data(), empty), ConfigError);
}

}  // namespace
}  // namespace patchcraft
