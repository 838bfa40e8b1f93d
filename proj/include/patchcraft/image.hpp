#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "patchcraft/random.hpp"

namespace patchcraft {

// RGB raster, row-major (row, col, channel), values in [0, 1] until normalized.
struct Image {
  static constexpr std::size_t kChannels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), pixels(h * w * kChannels, fill) {}

  float& at(std::size_t row, std::size_t col, std::size_t channel) {
    return pixels[(row * width + col) * kChannels + channel];
  }
  float at(std::size_t row, std::size_t col, std::size_t channel) const {
    return pixels[(row * width + col) * kChannels + channel];
  }

  bool operator==(const Image&) const = default;
};

// Bilinear resampling to target x target using pixel-center alignment with
// edge clamping.
Image resize(const Image& img, std::size_t target);

Image flip_horizontal(const Image& img);

// Rotation about the image center by `radians` (counter-clockwise),
// bilinear resampling, out-of-range samples clamped to the nearest edge.
Image rotate(const Image& img, double radians);

struct AugmentPolicy {
  bool enabled = true;
  double flip_probability = 0.5;
  double max_rotation = 0.1;  // radians, sampled uniformly in [-max, +max]
};

// Random horizontal flip followed by a random small rotation. A disabled
// policy returns the input unchanged.
Image augment(const Image& img, Rng& rng, const AugmentPolicy& policy);

// Decoding: binary PPM (P6, 8-bit), PNG, and JPEG, chosen by file contents.
// Throws InputError for anything it cannot decode.
Image read_image(const std::filesystem::path& path);

// Writes an 8-bit binary PPM; values are clamped to [0, 1] and rounded.
void write_ppm(const std::filesystem::path& path, const Image& img);

}  // namespace patchcraft
