#include "patchcraft/image.hpp"

#include <algorithm>
#include <cmath>

#include "patchcraft/errors.hpp"

namespace patchcraft {

namespace {

// Bilinear sample at continuous pixel coordinates (row, col measured at pixel
// centers), clamping to the border.
void sample_bilinear(const Image& img, double y, double x, float* out) {
  const double max_y = static_cast<double>(img.height - 1);
  const double max_x = static_cast<double>(img.width - 1);
  y = std::clamp(y, 0.0, max_y);
  x = std::clamp(x, 0.0, max_x);
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    if (fy == 0.0 && fx == 0.0) {
      out[c] = img.at(y0, x0, c);
      continue;
    }
    const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
    const double bottom = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
    out[c] = static_cast<float>(top * (1.0 - fy) + bottom * fy);
  }
}

}  // namespace

Image resize(const Image& img, std::size_t target) {
  if (target == 0) {
    throw ConfigError("resize target must be at least 1");
  }
  if (img.height == 0 || img.width == 0) {
    throw InputError("cannot resize an empty image");
  }
  if (img.height == target && img.width == target) {
    return img;
  }
  Image out(target, target);
  const double sy = static_cast<double>(img.height) / static_cast<double>(target);
  const double sx = static_cast<double>(img.width) / static_cast<double>(target);
  for (std::size_t r = 0; r < target; ++r) {
    const double y = (static_cast<double>(r) + 0.5) * sy - 0.5;
    for (std::size_t c = 0; c < target; ++c) {
      const double x = (static_cast<double>(c) + 0.5) * sx - 0.5;
      sample_bilinear(img, y, x, &out.at(r, c, 0));
    }
  }
  for (float& v : out.pixels) {
    v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      for (std::size_t ch = 0; ch < Image::kChannels; ++ch) {
        out.at(r, c, ch) = img.at(r, img.width - 1 - c, ch);
      }
    }
  }
  return out;
}

Image rotate(const Image& img, double radians) {
  if (radians == 0.0) {
    return img;
  }
  Image out(img.height, img.width);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double cos_a = std::cos(radians);
  const double sin_a = std::sin(radians);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      // Inverse map: destination pixel back into the source frame.
      const double dy = static_cast<double>(r) - cy;
      const double dx = static_cast<double>(c) - cx;
      const double sx = cos_a * dx - sin_a * dy + cx;
      const double sy = sin_a * dx + cos_a * dy + cy;
      sample_bilinear(img, sy, sx, &out.at(r, c, 0));
    }
  }
  return out;
}

Image augment(const Image& img, Rng& rng, const AugmentPolicy& policy) {
  if (!policy.enabled) {
    return img;
  }
  Image out = rng.bernoulli(policy.flip_probability) ? flip_horizontal(img) : img;
  const double angle = rng.uniform(-policy.max_rotation, policy.max_rotation);
  return rotate(out, angle);
}

}  // namespace patchcraft
