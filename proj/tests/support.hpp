#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <span>

#include "patchcraft/image.hpp"
#include "patchcraft/random.hpp"
#include "patchcraft/trainer.hpp"
#include "patchcraft/vit.hpp"

namespace patchcraft::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct Rgb {
  float r, g, b;
};

// Class colors of the synthetic fixture, far apart in RGB.
const std::vector<Rgb>& fixture_colors();

Image flat_image(std::size_t size, Rgb color);

// Writes root/class_<k>/img_<i>.ppm, one flat color per class with a small
// per-image brightness jitter. Returns root.
std::filesystem::path write_flat_color_dataset(const std::filesystem::path& root,
                                               std::size_t classes = 4,
                                               std::size_t per_class = 8,
                                               std::size_t size = 16);

// S=16, P=8, D=8, H=2, L=2 with the given class count and head widths.
ViTConfig tiny_config(std::size_t classes = 4, std::vector<std::size_t> head_hidden = {2048, 1024});

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);

// Attention layer with every projection drawn uniformly from [-scale, scale].
EncoderLayerParams<float> random_attention_layer(std::size_t width, Rng& rng, double scale = 0.5);

// Oracles below are written as plain loops in double and share no code with
// the library kernels.

// Multi-head self-attention of one [tokens x width] sequence (row-major).
// `probabilities`, if given, receives [head][query][key].
std::vector<double> reference_mhsa(std::span<const float> x, std::size_t tokens,
                                   std::size_t width, std::size_t heads,
                                   const EncoderLayerParams<float>& layer,
                                   std::vector<double>* probabilities = nullptr);

// mean_b( log(sum_c exp(z_bc)) - z_b,label ) with no max subtraction.
double reference_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// Adam with decoupled weight decay on a single scalar.
struct ScalarAdam {
  double lr, beta1, beta2, eps, weight_decay;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double theta, double g);
};

}  // namespace patchcraft::testing
