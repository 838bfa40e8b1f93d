#include "support.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <unistd.h>

namespace patchcraft::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("patchcraft_" + tag + "_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

const std::vector<Rgb>& fixture_colors() {
  static const std::vector<Rgb> colors{{0.9f, 0.1f, 0.1f},
                                       {0.1f, 0.8f, 0.2f},
                                       {0.15f, 0.2f, 0.9f},
                                       {0.9f, 0.85f, 0.1f},
                                       {0.6f, 0.2f, 0.7f},
                                       {0.2f, 0.8f, 0.8f}};
  return colors;
}

Image flat_image(std::size_t size, Rgb color) {
  Image img;
  img.height = size;
  img.width = size;
  img.pixels.resize(size * size * Image::kChannels);
  for (std::size_t i = 0; i < size * size; ++i) {
    img.pixels[i * 3 + 0] = color.r;
    img.pixels[i * 3 + 1] = color.g;
    img.pixels[i * 3 + 2] = color.b;
  }
  return img;
}

std::filesystem::path write_flat_color_dataset(const std::filesystem::path& root,
                                               std::size_t classes, std::size_t per_class,
                                               std::size_t size) {
  const auto& colors = fixture_colors();
  if (classes > colors.size()) {
    throw std::invalid_argument("too many fixture classes");
  }
  for (std::size_t c = 0; c < classes; ++c) {
    const auto dir = root / ("class_" + std::to_string(c));
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < per_class; ++i) {
      const float jitter = 0.04f * (static_cast<float>(i % 5) - 2.0f) / 2.0f;
      Rgb color = colors[c];
      color.r += jitter;
      color.g += jitter;
      color.b += jitter;
      write_ppm(dir / ("img_" + std::to_string(i) + ".ppm"), flat_image(size, color));
    }
  }
  return root;
}

ViTConfig tiny_config(std::size_t classes, std::vector<std::size_t> head_hidden) {
  ViTConfig c;
  c.image_size = 16;
  c.patch_size = 8;
  c.projection_dim = 8;
  c.num_heads = 2;
  c.num_layers = 2;
  c.num_classes = classes;
  c.head_hidden = std::move(head_hidden);
  return c;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<float> data(shape_numel(shape));
  for (auto& v : data) {
    v = static_cast<float>(rng.uniform(lo, hi));
  }
  return Tensor(std::move(shape), std::move(data));
}

EncoderLayerParams<float> random_attention_layer(std::size_t width, Rng& rng, double scale) {
  EncoderLayerParams<float> layer;
  for (LinearParams<float>* p : {&layer.query, &layer.key, &layer.value, &layer.output}) {
    p->weight = random_tensor({width, width}, rng, -scale, scale);
    p->bias = random_tensor({width}, rng, -scale, scale);
  }
  layer.attention_norm = {Tensor::full({width}, 1.0f), Tensor::zeros({width})};
  layer.mlp_norm = {Tensor::full({width}, 1.0f), Tensor::zeros({width})};
  return layer;
}

namespace {

// y = x W + b for a [rows x in] row-major x.
std::vector<double> affine(const std::vector<double>& x, std::size_t rows,
                           const LinearParams<float>& p) {
  const std::size_t in = p.weight.dim(0);
  const std::size_t out = p.weight.dim(1);
  std::vector<double> y(rows * out);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < out; ++j) {
      double acc = p.bias[j];
      for (std::size_t i = 0; i < in; ++i) {
        acc += x[r * in + i] * p.weight.at(i, j);
      }
      y[r * out + j] = acc;
    }
  }
  return y;
}

}  // namespace

std::vector<double> reference_mhsa(std::span<const float> x, std::size_t tokens,
                                   std::size_t width, std::size_t heads,
                                   const EncoderLayerParams<float>& layer,
                                   std::vector<double>* probabilities) {
  const std::vector<double> xd(x.begin(), x.end());
  const auto q = affine(xd, tokens, layer.query);
  const auto k = affine(xd, tokens, layer.key);
  const auto v = affine(xd, tokens, layer.value);
  const std::size_t d = width / heads;
  std::vector<double> context(tokens * width, 0.0);
  if (probabilities != nullptr) {
    probabilities->assign(heads * tokens * tokens, 0.0);
  }
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < tokens; ++i) {
      std::vector<double> scores(tokens);
      for (std::size_t j = 0; j < tokens; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dot += q[i * width + h * d + c] * k[j * width + h * d + c];
        }
        scores[j] = dot / std::sqrt(static_cast<double>(d));
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < tokens; ++j) {
        denom += std::exp(scores[j]);
      }
      for (std::size_t j = 0; j < tokens; ++j) {
        const double a = std::exp(scores[j]) / denom;
        if (probabilities != nullptr) {
          (*probabilities)[(h * tokens + i) * tokens + j] = a;
        }
        for (std::size_t c = 0; c < d; ++c) {
          context[i * width + h * d + c] += a * v[j * width + h * d + c];
        }
      }
    }
  }
  return affine(context, tokens, layer.output);
}

double reference_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  double total = 0.0;
  for (std::size_t b = 0; b < rows; ++b) {
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      denom += std::exp(static_cast<double>(logits.at(b, c)));
    }
    total += std::log(denom) - logits.at(b, labels[b]);
  }
  return total / static_cast<double>(rows);
}

double ScalarAdam::step(double theta, double g) {
  ++t;
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g * g;
  const double m_hat = m / (1.0 - std::pow(beta1, t));
  const double v_hat = v / (1.0 - std::pow(beta2, t));
  return theta - lr * m_hat / (std::sqrt(v_hat) + eps) - lr * weight_decay * theta;
}

}  // namespace patchcraft::testing
