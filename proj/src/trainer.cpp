#include "patchcraft/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "patchcraft/errors.hpp"
#include "patchcraft/ops.hpp"

namespace patchcraft {

namespace {

// Seed-stream tags for the independent random streams of one run.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kAugmentStream = 2;
constexpr std::uint64_t kDropoutStream = 3;

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0f)) {
    throw ConfigError("learning rate must be positive");
  }
  if (batch_size == 0) {
    throw ConfigError("batch size must be at least 1");
  }
  if (epochs == 0) {
    throw ConfigError("epochs must be at least 1");
  }
  if (!(weight_decay >= 0.0f)) {
    throw ConfigError("weight decay must be non-negative");
  }
  if (!(adam_beta1 >= 0.0f && adam_beta1 < 1.0f && adam_beta2 >= 0.0f && adam_beta2 < 1.0f)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0f)) {
    throw ConfigError("adam eps must be positive");
  }
}

template <typename T>
AdamState<T> AdamState<T>::like(std::span<const BasicTensor<T>> params) {
  AdamState state;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), T{0});
    state.second_moment.emplace_back(p.numel(), T{0});
  }
  return state;
}

template <typename T>
void adam_step(std::span<BasicTensor<T>> params, AdamState<T>& state, const TrainConfig& config) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("adam_step: optimizer state tracks " +
                        std::to_string(state.first_moment.size()) + " tensors, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel() ||
        state.second_moment[i].size() != params[i].numel()) {
      throw ContractError("adam_step: optimizer state for tensor " + std::to_string(i) +
                          " does not match shape " + shape_string(params[i].shape()));
    }
  }
  state.step += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double lr = config.learning_rate;
  const double wd = config.weight_decay;
  const double eps = config.adam_eps;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_data();
    const auto grads = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool has_grad = !grads.empty();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has_grad ? static_cast<double>(grads[j]) : 0.0;
      const double m_next = b1 * m[j] + (1.0 - b1) * g;
      const double v_next = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(m_next);
      v[j] = static_cast<T>(v_next);
      const double m_hat = m_next / correction1;
      const double v_hat = v_next / correction2;
      const double p = values[j];
      values[j] = static_cast<T>(p - lr * m_hat / (std::sqrt(v_hat) + eps) - lr * wd * p);
    }
  }
}

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  for (std::size_t label : labels) {
    if (label >= classes) {
      throw InputError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
  }
  std::vector<T> probs(batch * classes);
  double total = 0.0;
  const T* x = logits.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = x + b * classes;
    const double peak = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      denom += std::exp(static_cast<double>(row[c]) - peak);
    }
    const double lse = peak + std::log(denom);
    total += lse - static_cast<double>(row[labels[b]]);
    for (std::size_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = static_cast<T>(std::exp(static_cast<double>(row[c]) - lse));
    }
  }
  auto out = BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(batch)));
  return detail::record_op(
      out, {&logits},
      [ln = logits.node().get(), on = out.node().get(), probs = std::move(probs),
       targets = std::vector<std::size_t>(labels.begin(), labels.end()), batch, classes]() {
        const T g = on->grad[0] / static_cast<T>(batch);
        T* gl = ln->ensure_grad().data();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const T onehot = c == targets[b] ? T{1} : T{0};
            gl[b * classes + c] += g * (probs[b * classes + c] - onehot);
          }
        }
      });
}

std::vector<std::size_t> predict_classes(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw DimensionError("predict_classes needs [batch x classes], got " +
                         shape_string(logits.shape()));
  }
  const std::size_t classes = logits.dim(1);
  std::vector<std::size_t> out(logits.dim(0));
  for (std::size_t b = 0; b < out.size(); ++b) {
    const auto row = logits.data().subspan(b * classes, classes);
    // max_element returns the first maximum, which is the lowest index.
    out[b] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double sparse_categorical_accuracy(const Tensor& logits, std::span<const std::size_t> labels) {
  const auto predicted = predict_classes(logits);
  if (predicted.size() != labels.size()) {
    throw DimensionError("accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) {
    throw InputError("accuracy of an empty set is undefined");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    correct += predicted[i] == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

PreparedSet prepare(const Dataset& data, std::size_t image_size) {
  PreparedSet out;
  out.images.reserve(data.size());
  out.labels.reserve(data.size());
  for (const auto& item : data.items) {
    out.images.push_back(resize(item.pixels, image_size));
    out.labels.push_back(item.label);
  }
  return out;
}

double evaluate(const ViTParams<float>& params, const ViTConfig& config, const PreparedSet& data,
                const NormStats& stats, std::size_t batch_size) {
  if (data.size() == 0) {
    throw InputError("evaluate: empty data");
  }
  std::size_t correct = 0;
  std::vector<Image> batch;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(normalize(data.images[i], stats));
    }
    const Tensor logits = forward<float>(batch, params, config);
    const auto predicted = predict_classes(logits);
    for (std::size_t i = start; i < end; ++i) {
      correct += predicted[i - start] == data.labels[i] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<std::vector<double>> predict_probabilities(const ViTParams<float>& params,
                                                       const ViTConfig& config,
                                                       std::span<const Image> images) {
  const Tensor logits = forward<float>(images, params, config);
  const Tensor probs = ops::softmax(logits, 1);
  std::vector<std::vector<double>> out(images.size());
  for (std::size_t b = 0; b < images.size(); ++b) {
    for (std::size_t c = 0; c < config.num_classes; ++c) {
      out[b].push_back(probs.at(b, c));
    }
  }
  return out;
}

TrainResult train(const ViTConfig& model_config, const TrainConfig& train_config,
                  const Dataset& train_set, const Dataset& test_set, const EpochCallback& on_epoch) {
  model_config.validate();
  train_config.validate();
  if (train_set.empty()) {
    throw DatasetError("training set is empty");
  }
  if (train_set.num_classes() != model_config.num_classes) {
    throw ConfigError("model has " + std::to_string(model_config.num_classes) +
                      " classes but the dataset has " + std::to_string(train_set.num_classes()));
  }
  const auto started = std::chrono::steady_clock::now();

  const PreparedSet train_data = prepare(train_set, model_config.image_size);
  const PreparedSet test_data = prepare(test_set, model_config.image_size);
  TrainResult result{init_params(model_config, train_config.seed),
                     compute_norm_stats(train_data.images),
                     {}};
  std::vector<Tensor> params = result.params.tensors();
  auto state = AdamState<float>::like(params);
  AugmentPolicy policy;
  policy.enabled = train_config.augment;

  TrainReport& report = result.report;
  report.model_config = model_config;
  report.train_config = train_config;

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Image> batch_images;
  std::vector<std::size_t> batch_labels;
  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    Rng shuffler(derive_seed(train_config.seed, {kShuffleStream, epoch}));
    shuffler.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += train_config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + train_config.batch_size);
      batch_images.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t item = order[i];
        Rng item_rng(derive_seed(train_config.seed, {kAugmentStream, epoch, item}));
        batch_images.push_back(
            normalize(augment(train_data.images[item], item_rng, policy), result.norm_stats));
        batch_labels.push_back(train_data.labels[item]);
      }
      Rng dropout_rng(derive_seed(train_config.seed, {kDropoutStream, epoch, batch_index}));
      ForwardOptions<float> options{Mode::kTrain, &dropout_rng, nullptr};

      Tape<float> tape;
      Tensor logits;
      Tensor loss;
      {
        auto scope = tape.record();
        logits = forward<float>(batch_images, result.params, model_config, options);
        loss = cross_entropy(logits, batch_labels);
      }
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch_index + 1));
      }
      for (auto& p : params) {
        p.zero_grad();
      }
      tape.backward(loss);
      adam_step<float>(params, state, train_config);
      ++report.optimizer_steps;

      const auto predicted = predict_classes(logits);
      for (std::size_t i = 0; i < predicted.size(); ++i) {
        correct += predicted[i] == batch_labels[i] ? 1 : 0;
      }
      loss_sum += loss_value * static_cast<double>(end - start);
    }
    EpochStats stats{loss_sum / static_cast<double>(order.size()),
                     static_cast<double>(correct) / static_cast<double>(order.size())};
    report.epochs.push_back(stats);
    if (on_epoch) {
      on_epoch(epoch, stats);
    }
  }

  report.final_train_accuracy =
      evaluate(result.params, model_config, train_data, result.norm_stats, train_config.batch_size);
  if (test_data.size() > 0) {
    report.test_accuracy =
        evaluate(result.params, model_config, test_data, result.norm_stats, train_config.batch_size);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<Tensor>, AdamState<float>&, const TrainConfig&);
template void adam_step<double>(std::span<Tensor64>, AdamState<double>&, const TrainConfig&);
template Tensor cross_entropy<float>(const Tensor&, std::span<const std::size_t>);
template Tensor64 cross_entropy<double>(const Tensor64&, std::span<const std::size_t>);

}  // namespace patchcraft
