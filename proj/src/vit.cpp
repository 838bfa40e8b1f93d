#include "patchcraft/vit.hpp"

#include <string>

#include "patchcraft/errors.hpp"
#include "patchcraft/ops.hpp"

namespace patchcraft {

namespace {

template <typename P, typename F>
void visit_linear(P& linear, const std::string& prefix, F& f) {
  f(prefix + ".weight", linear.weight);
  f(prefix + ".bias", linear.bias);
}

template <typename P, typename F>
void visit_norm(P& norm, const std::string& prefix, F& f) {
  f(prefix + ".gamma", norm.gamma);
  f(prefix + ".beta", norm.beta);
}

// Calls f(name, tensor) for every parameter in canonical order.
template <typename P, typename F>
void visit_params(P& params, F&& f) {
  visit_linear(params.patch_projection, "patch_projection", f);
  f(std::string("positional_embedding"), params.positional_embedding);
  f(std::string("class_token"), params.class_token);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& layer = params.layers[i];
    const std::string prefix = "layers." + std::to_string(i);
    visit_norm(layer.attention_norm, prefix + ".attention_norm", f);
    visit_linear(layer.query, prefix + ".query", f);
    visit_linear(layer.key, prefix + ".key", f);
    visit_linear(layer.value, prefix + ".value", f);
    visit_linear(layer.output, prefix + ".output", f);
    visit_norm(layer.mlp_norm, prefix + ".mlp_norm", f);
    for (std::size_t j = 0; j < layer.mlp.size(); ++j) {
      visit_linear(layer.mlp[j], prefix + ".mlp." + std::to_string(j), f);
    }
  }
  visit_norm(params.final_norm, "final_norm", f);
  for (std::size_t j = 0; j < params.head.size(); ++j) {
    visit_linear(params.head[j], "head." + std::to_string(j), f);
  }
}

template <typename U, typename T, typename Fn>
ViTParams<U> map_params(const ViTParams<T>& src, Fn&& fn) {
  auto linear = [&](const LinearParams<T>& l) { return LinearParams<U>{fn(l.weight), fn(l.bias)}; };
  auto norm = [&](const LayerNormParams<T>& n) {
    return LayerNormParams<U>{fn(n.gamma), fn(n.beta)};
  };
  ViTParams<U> out;
  out.patch_projection = linear(src.patch_projection);
  out.positional_embedding = fn(src.positional_embedding);
  out.class_token = fn(src.class_token);
  for (const auto& layer : src.layers) {
    EncoderLayerParams<U> copy{norm(layer.attention_norm), linear(layer.query),
                               linear(layer.key),          linear(layer.value),
                               linear(layer.output),       norm(layer.mlp_norm),
                               {}};
    for (const auto& m : layer.mlp) {
      copy.mlp.push_back(linear(m));
    }
    out.layers.push_back(std::move(copy));
  }
  out.final_norm = norm(src.final_norm);
  for (const auto& h : src.head) {
    out.head.push_back(linear(h));
  }
  return out;
}

template <typename T>
LinearParams<T> zero_linear(std::size_t in, std::size_t out) {
  return {BasicTensor<T>::zeros({in, out}, true), BasicTensor<T>::zeros({out}, true)};
}

template <typename T>
LayerNormParams<T> unit_norm(std::size_t width) {
  return {BasicTensor<T>::full({width}, T{1}, true), BasicTensor<T>::zeros({width}, true)};
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
BasicTensor<T> maybe_dropout(const BasicTensor<T>& x, const ViTConfig& config,
                             const ForwardOptions<T>& options) {
  if (options.mode != Mode::kTrain || config.dropout_rate == 0.0f) {
    return x;
  }
  if (options.rng == nullptr) {
    throw ContractError("training-mode forward with dropout needs an rng");
  }
  return ops::dropout(x, static_cast<T>(config.dropout_rate), *options.rng);
}

template <typename T>
BasicTensor<T> mlp(const BasicTensor<T>& x, const std::vector<LinearParams<T>>& layers,
                   const ViTConfig& config, const ForwardOptions<T>& options, bool dropout_last) {
  BasicTensor<T> h = x;
  for (std::size_t j = 0; j < layers.size(); ++j) {
    h = ops::linear(h, layers[j].weight, layers[j].bias);
    const bool last = j + 1 == layers.size();
    if (!last) {
      h = ops::gelu(h);
    }
    if (!last || dropout_last) {
      h = maybe_dropout(h, config, options);
    }
  }
  return h;
}

std::size_t sequences_rows(std::size_t rows, std::size_t batch, const char* what) {
  if (batch == 0 || rows % batch != 0) {
    throw DimensionError(std::string(what) + ": " + std::to_string(rows) +
                         " rows do not split into " + std::to_string(batch) + " sequences");
  }
  return rows / batch;
}

}  // namespace

void ViTConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("invalid ViT config: " + why); };
  if (image_size == 0 || patch_size == 0 || projection_dim == 0 || num_heads == 0 ||
      num_layers == 0) {
    fail("all dims must be positive");
  }
  if (patch_size > image_size) {
    fail("patch size " + std::to_string(patch_size) + " exceeds image size " +
         std::to_string(image_size));
  }
  if (projection_dim % num_heads != 0) {
    fail("projection dim " + std::to_string(projection_dim) + " is not divisible by " +
         std::to_string(num_heads) + " heads");
  }
  if (num_classes < 2) {
    fail("need at least 2 classes");
  }
  const auto dims = mlp_dims();
  for (std::size_t d : dims) {
    if (d == 0) {
      fail("mlp widths must be positive");
    }
  }
  if (dims.back() != projection_dim) {
    fail("last mlp width must equal the projection dim for the residual connection");
  }
  for (std::size_t d : head_hidden) {
    if (d == 0) {
      fail("head widths must be positive");
    }
  }
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) {
    fail("dropout rate must lie in [0, 1)");
  }
  if (!(layer_norm_eps > 0.0f)) {
    fail("layer-norm eps must be positive");
  }
}

std::vector<std::size_t> ViTConfig::mlp_dims() const {
  if (mlp_hidden.empty()) {
    return {2 * projection_dim, projection_dim};
  }
  return mlp_hidden;
}

std::size_t parameter_count(const ViTConfig& config) {
  config.validate();
  const std::size_t d = config.projection_dim;
  auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
  std::size_t per_layer = 2 * d + 4 * linear(d, d) + 2 * d;
  std::size_t width = d;
  for (std::size_t w : config.mlp_dims()) {
    per_layer += linear(width, w);
    width = w;
  }
  std::size_t total = linear(config.patch_dim(), d) + config.sequence_length() * d + d;
  total += config.num_layers * per_layer;
  total += 2 * d;
  width = d;
  for (std::size_t w : config.head_hidden) {
    total += linear(width, w);
    width = w;
  }
  total += linear(width, config.num_classes);
  return total;
}

template <typename T>
ViTParams<T> ViTParams<T>::zeros(const ViTConfig& config) {
  config.validate();
  const std::size_t d = config.projection_dim;
  ViTParams params;
  params.patch_projection = zero_linear<T>(config.patch_dim(), d);
  params.positional_embedding = BasicTensor<T>::zeros({config.sequence_length(), d}, true);
  params.class_token = BasicTensor<T>::zeros({1, d}, true);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    EncoderLayerParams<T> layer{unit_norm<T>(d),       zero_linear<T>(d, d), zero_linear<T>(d, d),
                                zero_linear<T>(d, d),  zero_linear<T>(d, d), unit_norm<T>(d),
                                {}};
    std::size_t width = d;
    for (std::size_t w : config.mlp_dims()) {
      layer.mlp.push_back(zero_linear<T>(width, w));
      width = w;
    }
    params.layers.push_back(std::move(layer));
  }
  params.final_norm = unit_norm<T>(d);
  std::size_t width = d;
  for (std::size_t w : config.head_hidden) {
    params.head.push_back(zero_linear<T>(width, w));
    width = w;
  }
  params.head.push_back(zero_linear<T>(width, config.num_classes));
  return params;
}

template <typename T>
std::vector<NamedTensor<T>> ViTParams<T>::named_tensors() const {
  std::vector<NamedTensor<T>> out;
  visit_params(*this, [&](const std::string& name, const BasicTensor<T>& t) {
    out.push_back({name, t});
  });
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> ViTParams<T>::tensors() const {
  std::vector<BasicTensor<T>> out;
  visit_params(*this, [&](const std::string&, const BasicTensor<T>& t) { out.push_back(t); });
  return out;
}

template <typename T>
std::size_t ViTParams<T>::parameter_count() const {
  std::size_t total = 0;
  visit_params(*this, [&](const std::string&, const BasicTensor<T>& t) { total += t.numel(); });
  return total;
}

template <typename T>
ViTParams<T> ViTParams<T>::clone() const {
  return map_params<T>(*this, [](const BasicTensor<T>& t) {
    return BasicTensor<T>(t.shape(), std::vector<T>(t.data().begin(), t.data().end()),
                          t.requires_grad());
  });
}

template <typename T>
template <typename U>
ViTParams<U> ViTParams<T>::cast() const {
  return map_params<U>(*this, [](const BasicTensor<T>& t) { return t.template cast<U>(); });
}

ViTParams<float> init_params(const ViTConfig& config, std::uint64_t seed) {
  auto params = ViTParams<float>::zeros(config);
  Rng rng(seed);
  visit_params(params, [&](const std::string& name, Tensor& t) {
    if (ends_with(name, ".bias") || ends_with(name, ".beta") || ends_with(name, ".gamma")) {
      return;
    }
    for (float& w : t.mutable_data()) {
      w = static_cast<float>(rng.truncated_normal(0.02, 2.0));
    }
  });
  return params;
}

template <typename T>
BasicTensor<T> patchify(const Image& image, std::size_t patch) {
  return patchify_batch<T>(std::span<const Image>(&image, 1), patch);
}

template <typename T>
BasicTensor<T> patchify_batch(std::span<const Image> images, std::size_t patch) {
  if (images.empty()) {
    throw InputError("patchify: no images");
  }
  if (patch == 0) {
    throw ConfigError("patchify: patch size must be positive");
  }
  const std::size_t height = images.front().height;
  const std::size_t width = images.front().width;
  if (patch > height || patch > width) {
    throw ConfigError("patchify: patch size " + std::to_string(patch) + " exceeds image " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t tiles_y = height / patch;
  const std::size_t tiles_x = width / patch;
  const std::size_t patch_dim = patch * patch * Image::kChannels;
  const std::size_t per_image = tiles_y * tiles_x;
  std::vector<T> out(images.size() * per_image * patch_dim);
  T* dst = out.data();
  for (const Image& img : images) {
    if (img.height != height || img.width != width) {
      throw InputError("patchify: images in a batch must share one size");
    }
    for (std::size_t ty = 0; ty < tiles_y; ++ty) {
      for (std::size_t tx = 0; tx < tiles_x; ++tx) {
        for (std::size_t r = 0; r < patch; ++r) {
          const float* src =
              img.pixels.data() + ((ty * patch + r) * width + tx * patch) * Image::kChannels;
          for (std::size_t i = 0; i < patch * Image::kChannels; ++i) {
            *dst++ = static_cast<T>(src[i]);
          }
        }
      }
    }
  }
  return BasicTensor<T>(Shape{images.size() * per_image, patch_dim}, std::move(out));
}

template <typename T>
BasicTensor<T> encode_patches(const BasicTensor<T>& patches, const ViTParams<T>& params,
                              std::size_t batch) {
  const std::size_t n = sequences_rows(patches.dim(0), batch, "encode_patches");
  if (params.positional_embedding.dim(0) != n + 1) {
    throw DimensionError("encode_patches: " + std::to_string(n) +
                         " patches per image but positional embedding has " +
                         std::to_string(params.positional_embedding.dim(0)) + " rows");
  }
  BasicTensor<T> projected =
      ops::linear(patches, params.patch_projection.weight, params.patch_projection.bias);
  std::vector<std::size_t> rows;
  rows.reserve(batch * n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      rows.push_back(i + 1);
    }
  }
  return ops::add(projected, ops::take_rows(params.positional_embedding, rows));
}

template <typename T>
BasicTensor<T> prepend_class_token(const BasicTensor<T>& sequence, const ViTParams<T>& params,
                                   std::size_t batch) {
  const std::size_t n = sequences_rows(sequence.dim(0), batch, "prepend_class_token");
  if (sequence.dim(1) != params.class_token.dim(1)) {
    throw DimensionError("prepend_class_token: sequence width " +
                         std::to_string(sequence.dim(1)) + " does not match class token " +
                         shape_string(params.class_token.shape()));
  }
  const BasicTensor<T> token =
      ops::add(params.class_token, ops::slice_rows(params.positional_embedding, 0, 1));
  const std::vector<BasicTensor<T>> parts{token, sequence};
  const BasicTensor<T> combined = ops::concat_rows<T>(parts);
  std::vector<std::size_t> rows;
  rows.reserve(batch * (n + 1));
  for (std::size_t b = 0; b < batch; ++b) {
    rows.push_back(0);
    for (std::size_t i = 0; i < n; ++i) {
      rows.push_back(1 + b * n + i);
    }
  }
  return ops::take_rows(combined, rows);
}

template <typename T>
BasicTensor<T> multi_head_self_attention(const BasicTensor<T>& sequence,
                                         const EncoderLayerParams<T>& layer, std::size_t heads,
                                         std::size_t batch, std::vector<T>* probabilities) {
  const BasicTensor<T> q = ops::linear(sequence, layer.query.weight, layer.query.bias);
  const BasicTensor<T> k = ops::linear(sequence, layer.key.weight, layer.key.bias);
  const BasicTensor<T> v = ops::linear(sequence, layer.value.weight, layer.value.bias);
  const BasicTensor<T> context = ops::attention(q, k, v, batch, heads, probabilities);
  return ops::linear(context, layer.output.weight, layer.output.bias);
}

template <typename T>
BasicTensor<T> encoder_block(const BasicTensor<T>& sequence, const EncoderLayerParams<T>& layer,
                             const ViTConfig& config, std::size_t batch,
                             const ForwardOptions<T>& options) {
  const T eps = static_cast<T>(config.layer_norm_eps);
  std::vector<T>* probe = nullptr;
  if (options.attention_probe != nullptr) {
    options.attention_probe->emplace_back();
    probe = &options.attention_probe->back();
  }
  const BasicTensor<T> normed =
      ops::layer_norm(sequence, layer.attention_norm.gamma, layer.attention_norm.beta, eps);
  const BasicTensor<T> attended = ops::add(
      sequence, multi_head_self_attention(normed, layer, config.num_heads, batch, probe));
  const BasicTensor<T> normed2 =
      ops::layer_norm(attended, layer.mlp_norm.gamma, layer.mlp_norm.beta, eps);
  return ops::add(attended, mlp(normed2, layer.mlp, config, options, /*dropout_last=*/true));
}

template <typename T>
BasicTensor<T> forward_patches(const BasicTensor<T>& patches, std::size_t batch,
                               const ViTParams<T>& params, const ViTConfig& config,
                               const ForwardOptions<T>& options) {
  if (patches.rank() != 2 || patches.dim(1) != config.patch_dim() ||
      patches.dim(0) != batch * config.num_patches()) {
    throw InputError("forward: patches " + shape_string(patches.shape()) + " do not match " +
                     std::to_string(batch) + " images of " + std::to_string(config.num_patches()) +
                     " patches x " + std::to_string(config.patch_dim()));
  }
  BasicTensor<T> seq = prepend_class_token(encode_patches(patches, params, batch), params, batch);
  for (const auto& layer : params.layers) {
    seq = encoder_block(seq, layer, config, batch, options);
  }
  seq = ops::layer_norm(seq, params.final_norm.gamma, params.final_norm.beta,
                        static_cast<T>(config.layer_norm_eps));
  std::vector<std::size_t> class_rows(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    class_rows[b] = b * config.sequence_length();
  }
  const BasicTensor<T> features = ops::take_rows(seq, class_rows);
  return mlp(features, params.head, config, options, /*dropout_last=*/false);
}

template <typename T>
BasicTensor<T> forward(std::span<const Image> images, const ViTParams<T>& params,
                       const ViTConfig& config, const ForwardOptions<T>& options) {
  for (const Image& img : images) {
    if (img.height != config.image_size || img.width != config.image_size) {
      throw InputError("forward: image is " + std::to_string(img.height) + "x" +
                       std::to_string(img.width) + ", model expects " +
                       std::to_string(config.image_size) + "x" + std::to_string(config.image_size));
    }
  }
  return forward_patches(patchify_batch<T>(images, config.patch_size), images.size(), params,
                         config, options);
}

template <typename T>
BasicTensor<T> forward(const Image& image, const ViTParams<T>& params, const ViTConfig& config,
                       const ForwardOptions<T>& options) {
  BasicTensor<T> logits = forward<T>(std::span<const Image>(&image, 1), params, config, options);
  return ops::reshape(logits, Shape{config.num_classes});
}

template struct ViTParams<float>;
template struct ViTParams<double>;
template ViTParams<double> ViTParams<float>::cast<double>() const;
template ViTParams<float> ViTParams<double>::cast<float>() const;

#define PATCHCRAFT_INSTANTIATE_VIT(T)                                                         \
  template BasicTensor<T> patchify<T>(const Image&, std::size_t);                             \
  template BasicTensor<T> patchify_batch<T>(std::span<const Image>, std::size_t);             \
  template BasicTensor<T> encode_patches(const BasicTensor<T>&, const ViTParams<T>&,          \
                                         std::size_t);                                        \
  template BasicTensor<T> prepend_class_token(const BasicTensor<T>&, const ViTParams<T>&,     \
                                              std::size_t);                                   \
  template BasicTensor<T> multi_head_self_attention(const BasicTensor<T>&,                    \
                                                    const EncoderLayerParams<T>&, std::size_t, \
                                                    std::size_t, std::vector<T>*);            \
  template BasicTensor<T> encoder_block(const BasicTensor<T>&, const EncoderLayerParams<T>&,  \
                                        const ViTConfig&, std::size_t,                        \
                                        const ForwardOptions<T>&);                            \
  template BasicTensor<T> forward_patches(const BasicTensor<T>&, std::size_t,                 \
                                          const ViTParams<T>&, const ViTConfig&,              \
                                          const ForwardOptions<T>&);                          \
  template BasicTensor<T> forward(std::span<const Image>, const ViTParams<T>&,                \
                                  const ViTConfig&, const ForwardOptions<T>&);                \
  template BasicTensor<T> forward(const Image&, const ViTParams<T>&, const ViTConfig&,        \
                                  const ForwardOptions<T>&);

PATCHCRAFT_INSTANTIATE_VIT(float)
PATCHCRAFT_INSTANTIATE_VIT(double)

#undef PATCHCRAFT_INSTANTIATE_VIT

}  // namespace patchcraft
