#include "patchcraft/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <numeric>

#include "patchcraft/errors.hpp"
#include "patchcraft/random.hpp"

namespace patchcraft {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm";
}

constexpr float kMinStd = 1e-6f;

}  // namespace

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& item : items) {
    ++counts.at(item.label);
  }
  return counts;
}

Dataset load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw DatasetError("dataset root is not a directory: " + root.string());
  }
  Dataset data;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) {
      data.class_names.push_back(entry.path().filename().string());
    }
  }
  std::sort(data.class_names.begin(), data.class_names.end());
  if (data.class_names.size() < 2) {
    throw DatasetError("dataset needs at least 2 class directories, found " +
                       std::to_string(data.class_names.size()) + " in " + root.string());
  }
  for (std::size_t label = 0; label < data.class_names.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / data.class_names[label])) {
      if (entry.is_regular_file() && is_image_file(entry.path())) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    std::size_t loaded = 0;
    for (const auto& file : files) {
      try {
        data.items.push_back(LabeledImage{read_image(file), label, file.string()});
        ++loaded;
      } catch (const InputError& e) {
        std::cerr << "warning: skipping " << file.string() << ": " << e.what() << '\n';
      }
    }
    if (loaded == 0) {
      throw DatasetError("class '" + data.class_names[label] + "' has no decodable images");
    }
  }
  return data;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double test_fraction,
                                             std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie strictly between 0 and 1");
  }
  std::vector<std::vector<std::size_t>> by_class(data.num_classes());
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    by_class.at(data.items[i].label).push_back(i);
  }
  std::vector<bool> in_test(data.items.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.size() < 2) {
      throw DatasetError("class '" + data.class_names[c] + "' has " +
                         std::to_string(members.size()) + " item(s); splitting needs at least 2");
    }
    Rng rng(derive_seed(seed, {c}));
    rng.shuffle(std::span<std::size_t>(members));
    const auto n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(members.size()) * test_fraction));
    for (std::size_t i = 0; i < n_test; ++i) {
      in_test[members[i]] = true;
    }
  }
  Dataset train;
  Dataset test;
  train.class_names = test.class_names = data.class_names;
  train.split_seed = test.split_seed = seed;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    (in_test[i] ? test : train).items.push_back(data.items[i]);
  }
  return {std::move(train), std::move(test)};
}

NormStats compute_norm_stats(const std::vector<Image>& images) {
  if (images.empty()) {
    throw DatasetError("cannot compute normalization statistics of an empty set");
  }
  std::array<double, 3> total{};
  std::array<double, 3> total_sq{};
  double count = 0.0;
  for (const Image& img : images) {
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
      for (std::size_t c = 0; c < 3; ++c) {
        total[c] += img.pixels[i + c];
      }
    }
    count += static_cast<double>(img.pixels.size() / 3);
  }
  NormStats stats;
  for (std::size_t c = 0; c < 3; ++c) {
    stats.mean[c] = static_cast<float>(total[c] / count);
  }
  for (const Image& img : images) {
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = img.pixels[i + c] - static_cast<double>(stats.mean[c]);
        total_sq[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    const auto sd = static_cast<float>(std::sqrt(total_sq[c] / count));
    stats.stddev[c] = sd > 0.0f ? sd : kMinStd;
  }
  return stats;
}

NormStats compute_norm_stats(const Dataset& train, std::size_t image_size) {
  std::vector<Image> resized;
  resized.reserve(train.size());
  for (const auto& item : train.items) {
    resized.push_back(resize(item.pixels, image_size));
  }
  return compute_norm_stats(resized);
}

Image normalize(const Image& img, const NormStats& stats) {
  Image out = img;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const std::size_t c = i % 3;
    out.pixels[i] = (out.pixels[i] - stats.mean[c]) / stats.stddev[c];
  }
  return out;
}

Image denormalize(const Image& img, const NormStats& stats) {
  Image out = img;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const std::size_t c = i % 3;
    out.pixels[i] = out.pixels[i] * stats.stddev[c] + stats.mean[c];
  }
  return out;
}

}  // namespace patchcraft
