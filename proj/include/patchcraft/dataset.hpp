#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "patchcraft/image.hpp"

namespace patchcraft {

struct LabeledImage {
  Image pixels;
  std::size_t label = 0;
  std::string source_path;
};

struct Dataset {
  std::vector<LabeledImage> items;
  std::vector<std::string> class_names;  // sorted; labels index into this
  std::uint64_t split_seed = 0;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;
};

// Reads root/<class_name>/*.{png,jpg,jpeg,ppm}. Class names are the sorted
// subdirectory names; items are ordered by (class, file path). Undecodable
// files are skipped with a warning on stderr.
Dataset load_dataset(const std::filesystem::path& root);

// Per class: shuffle with `seed`, then send round(n * test_fraction) items
// to the test side. Item order inside each side follows the source order.
std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double test_fraction,
                                             std::uint64_t seed);

struct NormStats {
  std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
  std::array<float, 3> stddev{1.0f, 1.0f, 1.0f};
};

// Per-channel statistics over every pixel of the given images.
NormStats compute_norm_stats(const std::vector<Image>& images);
// Resizes each training image to `image_size` before measuring.
NormStats compute_norm_stats(const Dataset& train, std::size_t image_size);

Image normalize(const Image& img, const NormStats& stats);
Image denormalize(const Image& img, const NormStats& stats);

}  // namespace patchcraft
