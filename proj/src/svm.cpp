#include "patchcraft/svm.hpp"

#include <algorithm>
#include <numeric>

#include "patchcraft/checkpoint.hpp"
#include "patchcraft/errors.hpp"
#include "patchcraft/random.hpp"
#include "patchcraft/serialization.hpp"

namespace patchcraft {

namespace {

double dot(std::span<const float> w, std::span<const float> x) {
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    total += static_cast<double>(w[i]) * x[i];
  }
  return total;
}

std::span<const float> row(const Tensor& m, std::size_t r) {
  return m.data().subspan(r * m.dim(1), m.dim(1));
}

}  // namespace

std::vector<float> flatten_image(const Image& img) { return img.pixels; }

SvmModel train_svm(const Tensor& features, std::span<const std::size_t> labels,
                   std::size_t num_classes, const SvmConfig& config) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("train_svm: features " + shape_string(features.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.size() < 2) {
    throw TrainingError("train_svm: need at least 2 samples");
  }
  if (num_classes < 2) {
    throw TrainingError("train_svm: need at least 2 classes");
  }
  std::vector<bool> present(num_classes, false);
  for (std::size_t y : labels) {
    if (y >= num_classes) {
      throw InputError("train_svm: label " + std::to_string(y) + " out of range");
    }
    present[y] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw TrainingError("train_svm: training data contains a single class");
  }
  const std::size_t samples = features.dim(0);
  const std::size_t dims = features.dim(1);
  SvmModel model{Tensor::zeros({num_classes, dims}), Tensor::zeros({num_classes}),
                 config.reg_lambda, 0};
  const double lr = config.learning_rate;
  // Proximal step for the L2 term; stays stable for any lambda * lr.
  const double shrink = 1.0 / (1.0 + 2.0 * lr * config.reg_lambda);

  // Classes are independent problems with independent sample orders.
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto w = model.weights.mutable_data().subspan(c * dims, dims);
    double b = 0.0;
    std::vector<std::size_t> order(samples);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      Rng rng(derive_seed(config.seed, {c, epoch}));
      rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t i : order) {
        const auto x = row(features, i);
        const double y = labels[i] == c ? 1.0 : -1.0;
        const double margin = y * (dot(w, x) + b);
        if (margin < 1.0) {
          for (std::size_t j = 0; j < dims; ++j) {
            w[j] = static_cast<float>((w[j] + lr * y * x[j]) * shrink);
          }
          b += lr * y;
        } else {
          for (float& wj : w) {
            wj = static_cast<float>(wj * shrink);
          }
        }
      }
    }
    model.bias.mutable_data()[c] = static_cast<float>(b);
  }
  return model;
}

std::vector<double> svm_scores(const SvmModel& model, std::span<const float> x) {
  if (x.size() != model.num_features()) {
    throw InputError("predict_svm: feature vector has " + std::to_string(x.size()) +
                     " values, model expects " + std::to_string(model.num_features()));
  }
  std::vector<double> scores(model.num_classes());
  for (std::size_t c = 0; c < scores.size(); ++c) {
    scores[c] = dot(row(model.weights, c), x) + model.bias[c];
  }
  return scores;
}

std::size_t predict_svm(const SvmModel& model, std::span<const float> x) {
  const auto scores = svm_scores(model, x);
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

double svm_objective(const SvmModel& model, std::size_t c, const Tensor& features,
                     std::span<const std::size_t> labels) {
  const auto w = row(model.weights, c);
  double hinge = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = labels[i] == c ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - y * (dot(w, row(features, i)) + model.bias[c]));
  }
  return model.reg_lambda * dot(w, w) + hinge / static_cast<double>(labels.size());
}

Tensor image_features(const Dataset& data, std::size_t feature_size, const NormStats& stats) {
  if (data.empty()) {
    throw DatasetError("no images to featurize");
  }
  const std::size_t dims = feature_size * feature_size * Image::kChannels;
  std::vector<float> values;
  values.reserve(data.size() * dims);
  for (const auto& item : data.items) {
    const auto flat = flatten_image(normalize(resize(item.pixels, feature_size), stats));
    values.insert(values.end(), flat.begin(), flat.end());
  }
  return Tensor({data.size(), dims}, std::move(values));
}

SvmClassifier train_svm_classifier(const Dataset& train_set, const SvmConfig& config) {
  SvmClassifier classifier;
  classifier.config = config;
  classifier.class_names = train_set.class_names;
  classifier.norm_stats = compute_norm_stats(train_set, config.feature_size);
  const Tensor features = image_features(train_set, config.feature_size, classifier.norm_stats);
  std::vector<std::size_t> labels;
  for (const auto& item : train_set.items) {
    labels.push_back(item.label);
  }
  classifier.model = train_svm(features, labels, train_set.num_classes(), config);
  classifier.model.feature_size = config.feature_size;
  return classifier;
}

double evaluate_svm(const SvmClassifier& classifier, const Dataset& data) {
  const Tensor features =
      image_features(data, classifier.model.feature_size, classifier.norm_stats);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    correct += predict_svm(classifier.model, row(features, i)) == data.items[i].label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void save_svm(const std::filesystem::path& path, const SvmClassifier& classifier) {
  nlohmann::json header;
  header["feature_size"] = classifier.model.feature_size;
  header["reg_lambda"] = classifier.model.reg_lambda;
  header["class_names"] = classifier.class_names;
  header["norm_stats"] = classifier.norm_stats;
  header["train"] = {{"epochs", classifier.config.epochs},
                     {"learning_rate", classifier.config.learning_rate},
                     {"seed", classifier.config.seed}};
  const std::vector<NamedTensor<float>> tensors{{"weights", classifier.model.weights},
                                                {"bias", classifier.model.bias}};
  write_container(path, kSvmMagic, header.dump(), tensors);
}

SvmClassifier load_svm(const std::filesystem::path& path) {
  Container container = read_container(path, kSvmMagic);
  SvmClassifier classifier;
  try {
    const auto header = nlohmann::json::parse(container.json);
    header.at("feature_size").get_to(classifier.model.feature_size);
    header.at("reg_lambda").get_to(classifier.model.reg_lambda);
    header.at("class_names").get_to(classifier.class_names);
    header.at("norm_stats").get_to(classifier.norm_stats);
    const auto& train = header.at("train");
    train.at("epochs").get_to(classifier.config.epochs);
    train.at("learning_rate").get_to(classifier.config.learning_rate);
    train.at("seed").get_to(classifier.config.seed);
    classifier.config.feature_size = classifier.model.feature_size;
    classifier.config.reg_lambda = classifier.model.reg_lambda;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad JSON header: " + e.what());
  }
  for (auto& record : container.tensors) {
    Tensor t(record.shape, std::move(record.data));
    if (record.name == "weights") {
      classifier.model.weights = t;
    } else if (record.name == "bias") {
      classifier.model.bias = t;
    }
  }
  if (!classifier.model.weights.defined() || !classifier.model.bias.defined() ||
      classifier.model.weights.rank() != 2 ||
      classifier.model.bias.numel() != classifier.model.weights.dim(0)) {
    throw CheckpointError(path.string() + ": missing or inconsistent SVM tensors");
  }
  return classifier;
}

}  // namespace patchcraft
