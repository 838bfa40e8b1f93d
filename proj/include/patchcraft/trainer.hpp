#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "patchcraft/dataset.hpp"
#include "patchcraft/tensor.hpp"
#include "patchcraft/vit.hpp"

namespace patchcraft {

struct TrainConfig {
  float learning_rate = 1e-4f;
  float weight_decay = 1e-4f;  // decoupled, scaled by the learning rate
  std::size_t batch_size = 32;
  std::size_t epochs = 25;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  std::uint64_t seed = 42;
  bool augment = true;  // random flip + small rotation on training batches

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::uint64_t step = 0;

  static AdamState like(std::span<const BasicTensor<T>> params);
};

// One Adam update with decoupled weight decay, reading each parameter's
// gradient buffer (a missing buffer counts as zero):
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,  t <- t + 1
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
template <typename T>
void adam_step(std::span<BasicTensor<T>> params, AdamState<T>& state, const TrainConfig& config);

// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::size_t> labels);

// Row-wise argmax; ties go to the lowest class index.
std::vector<std::size_t> predict_classes(const Tensor& logits);

// Fraction of rows whose argmax equals the label.
double sparse_categorical_accuracy(const Tensor& logits, std::span<const std::size_t> labels);

// Images resized to the model resolution, still in [0, 1].
struct PreparedSet {
  std::vector<Image> images;
  std::vector<std::size_t> labels;

  std::size_t size() const { return images.size(); }
};

PreparedSet prepare(const Dataset& data, std::size_t image_size);

double evaluate(const ViTParams<float>& params, const ViTConfig& config, const PreparedSet& data,
                const NormStats& stats, std::size_t batch_size = 32);

// Per-item class probabilities for normalized, correctly sized images.
std::vector<std::vector<double>> predict_probabilities(const ViTParams<float>& params,
                                                       const ViTConfig& config,
                                                       std::span<const Image> images);

struct EpochStats {
  double mean_loss = 0.0;       // example-weighted over the epoch
  double train_accuracy = 0.0;  // measured on the augmented training batches
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double final_train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  double wall_seconds = 0.0;
  std::size_t optimizer_steps = 0;
  ViTConfig model_config;
  TrainConfig train_config;
};

struct TrainResult {
  ViTParams<float> params;
  NormStats norm_stats;
  TrainReport report;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochStats&)>;

// Trains from init_params(model_config, train_config.seed). Deterministic in
// (seed, data, configs). `test` may be empty.
TrainResult train(const ViTConfig& model_config, const TrainConfig& train_config,
                  const Dataset& train_set, const Dataset& test_set,
                  const EpochCallback& on_epoch = {});

}  // namespace patchcraft
