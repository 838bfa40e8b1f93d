#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "patchcraft/dataset.hpp"
#include "patchcraft/image.hpp"
#include "patchcraft/tensor.hpp"

namespace patchcraft {

struct SvmConfig {
  std::size_t feature_size = 200;  // images are resized to feature_size^2 x 3 before flattening
  float reg_lambda = 1e-4f;
  std::size_t epochs = 25;
  float learning_rate = 1e-3f;
  std::uint64_t seed = 42;
};

// One-vs-rest linear classifier over flattened pixel vectors.
struct SvmModel {
  Tensor weights;  // [classes x features]
  Tensor bias;     // [classes]
  float reg_lambda = 0.0f;
  // Side of the square image the features came from; 0 for raw feature vectors.
  std::size_t feature_size = 0;

  std::size_t num_classes() const { return weights.dim(0); }
  std::size_t num_features() const { return weights.dim(1); }
};

// Row-major (row, col, channel) copy of the pixels.
std::vector<float> flatten_image(const Image& img);

// Trains one hinge-loss classifier per class (label c vs. the rest) by
// per-sample sub-gradient descent on
//   lambda * |w|^2 + mean_i max(0, 1 - y_i (w . x_i + b)),
// taking the L2 term as a proximal shrink w / (1 + 2 lr lambda).
// `features` is [samples x F]; sample order is reshuffled every epoch from `seed`.
SvmModel train_svm(const Tensor& features, std::span<const std::size_t> labels,
                   std::size_t num_classes, const SvmConfig& config);

// Argmax of w_c . x + b_c, ties to the lowest class.
std::size_t predict_svm(const SvmModel& model, std::span<const float> x);

std::vector<double> svm_scores(const SvmModel& model, std::span<const float> x);

// Regularized hinge objective of class `c`'s one-vs-rest problem.
double svm_objective(const SvmModel& model, std::size_t c, const Tensor& features,
                     std::span<const std::size_t> labels);

// Image pipeline: resize to feature_size, normalize with training statistics, flatten.
struct SvmClassifier {
  SvmModel model;
  NormStats norm_stats;
  std::vector<std::string> class_names;
  SvmConfig config;
};

Tensor image_features(const Dataset& data, std::size_t feature_size, const NormStats& stats);

SvmClassifier train_svm_classifier(const Dataset& train_set, const SvmConfig& config);
double evaluate_svm(const SvmClassifier& classifier, const Dataset& data);

void save_svm(const std::filesystem::path& path, const SvmClassifier& classifier);
SvmClassifier load_svm(const std::filesystem::path& path);

}  // namespace patchcraft
