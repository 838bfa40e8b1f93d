#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "patchcraft/image.hpp"
#include "patchcraft/random.hpp"
#include "patchcraft/tensor.hpp"

namespace patchcraft {

// Hyperparameters of one Vision Transformer variant.
struct ViTConfig {
  std::size_t image_size = 72;
  std::size_t patch_size = 8;
  std::size_t projection_dim = 64;
  std::size_t num_heads = 2;
  std::size_t num_layers = 8;
  std::size_t num_classes = 4;
  // Encoder MLP widths. Empty means {2 * projection_dim, projection_dim}.
  std::vector<std::size_t> mlp_hidden;
  std::vector<std::size_t> head_hidden{2048, 1024};
  float dropout_rate = 0.0f;
  float layer_norm_eps = 1e-6f;

  // Throws ConfigError when the combination cannot describe a model.
  void validate() const;

  std::size_t patches_per_side() const { return image_size / patch_size; }
  std::size_t num_patches() const { return patches_per_side() * patches_per_side(); }
  std::size_t patch_dim() const { return patch_size * patch_size * Image::kChannels; }
  std::size_t sequence_length() const { return num_patches() + 1; }
  std::vector<std::size_t> mlp_dims() const;

  bool operator==(const ViTConfig&) const = default;
};

template <typename T>
struct LinearParams {
  BasicTensor<T> weight;  // [in x out]
  BasicTensor<T> bias;    // [out]
};

template <typename T>
struct LayerNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

template <typename T>
struct EncoderLayerParams {
  LayerNormParams<T> attention_norm;
  LinearParams<T> query;
  LinearParams<T> key;
  LinearParams<T> value;
  LinearParams<T> output;
  LayerNormParams<T> mlp_norm;
  std::vector<LinearParams<T>> mlp;
};

// Learnable tensors of one model. Tensor handles share storage, so copies of
// a ViTParams alias the same weights; use clone() for an independent copy.
template <typename T>
struct ViTParams {
  LinearParams<T> patch_projection;
  BasicTensor<T> positional_embedding;  // [(N + 1) x D], row 0 belongs to the class token
  BasicTensor<T> class_token;           // [1 x D]
  std::vector<EncoderLayerParams<T>> layers;
  LayerNormParams<T> final_norm;
  std::vector<LinearParams<T>> head;  // last entry produces the class logits

  // Zero weights, unit layer-norm gains, shaped for `config`.
  static ViTParams zeros(const ViTConfig& config);

  // Every tensor in a fixed canonical order with dotted names.
  std::vector<NamedTensor<T>> named_tensors() const;
  std::vector<BasicTensor<T>> tensors() const;
  std::size_t parameter_count() const;

  ViTParams clone() const;
  template <typename U>
  ViTParams<U> cast() const;
};

// Closed-form parameter count for `config`.
std::size_t parameter_count(const ViTConfig& config);

// Truncated normal (std 0.02, cut at two std) for weights, class token and
// positional embedding; zero biases and betas; unit gammas.
ViTParams<float> init_params(const ViTConfig& config, std::uint64_t seed);

enum class Mode { kTrain, kEval };

template <typename T>
struct ForwardOptions {
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;  // required for dropout in training mode
  // When set, receives each layer's attention probabilities in the layout of
  // ops::attention.
  std::vector<std::vector<T>>* attention_probe = nullptr;
};

// Splits a square image into non-overlapping patch x patch tiles in row-major
// tile order, each flattened as (row, col, channel). Remainder pixels on the
// right and bottom are dropped. Returns [N x patch * patch * 3].
template <typename T>
BasicTensor<T> patchify(const Image& image, std::size_t patch);

// Stacks the patches of several images: [(batch * N) x patch_dim].
template <typename T>
BasicTensor<T> patchify_batch(std::span<const Image> images, std::size_t patch);

// Projects patches to D and adds positional rows 1..N. Input [(batch * N) x patch_dim].
template <typename T>
BasicTensor<T> encode_patches(const BasicTensor<T>& patches, const ViTParams<T>& params,
                              std::size_t batch);

// Inserts class_token + positional row 0 in front of each sequence.
// [(batch * N) x D] -> [(batch * (N + 1)) x D]
template <typename T>
BasicTensor<T> prepend_class_token(const BasicTensor<T>& sequence, const ViTParams<T>& params,
                                   std::size_t batch);

template <typename T>
BasicTensor<T> multi_head_self_attention(const BasicTensor<T>& sequence,
                                         const EncoderLayerParams<T>& layer, std::size_t heads,
                                         std::size_t batch,
                                         std::vector<T>* probabilities = nullptr);

// Pre-norm residual block: x + MHSA(LN(x)), then x + MLP(LN(x)).
template <typename T>
BasicTensor<T> encoder_block(const BasicTensor<T>& sequence, const EncoderLayerParams<T>& layer,
                             const ViTConfig& config, std::size_t batch,
                             const ForwardOptions<T>& options = {});

// Patches of `batch` images -> [batch x num_classes] unnormalized logits.
template <typename T>
BasicTensor<T> forward_patches(const BasicTensor<T>& patches, std::size_t batch,
                               const ViTParams<T>& params, const ViTConfig& config,
                               const ForwardOptions<T>& options = {});

// Images (already normalized, image_size square) -> [batch x num_classes].
template <typename T>
BasicTensor<T> forward(std::span<const Image> images, const ViTParams<T>& params,
                       const ViTConfig& config, const ForwardOptions<T>& options = {});

// Single image -> [num_classes].
template <typename T>
BasicTensor<T> forward(const Image& image, const ViTParams<T>& params, const ViTConfig& config,
                       const ForwardOptions<T>& options = {});

}  // namespace patchcraft
