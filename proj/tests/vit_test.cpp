#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "patchcraft/errors.hpp"
#include "patchcraft/grad_check.hpp"
#include "patchcraft/ops.hpp"
#include "patchcraft/trainer.hpp"
#include "patchcraft/vit.hpp"
#include "support.hpp"

namespace patchcraft {
namespace {

using testing::random_tensor;
using testing::tiny_config;

Image random_image(std::size_t size, Rng& rng) {
  Image img(size, size);
  for (auto& v : img.pixels) {
    v = static_cast<float>(rng.uniform());
  }
  return img;
}

template <typename T>
void randomize(ViTParams<T>& params, Rng& rng, double scale) {
  for (auto& nt : params.named_tensors()) {
    const bool gain = nt.name.find("gamma") != std::string::npos;
    for (auto& v : nt.tensor.mutable_data()) {
      v = static_cast<T>((gain ? 1.0 : 0.0) + rng.uniform(-scale, scale));
    }
  }
}

TEST(Patchify, DefaultResolutionShapes) {
  Rng rng(1);
  const Image img = random_image(72, rng);
  const Tensor p8 = patchify<float>(img, 8);
  EXPECT_EQ(p8.shape(), (Shape{81, 192}));
  const Tensor p16 = patchify<float>(img, 16);
  EXPECT_EQ(p16.shape(), (Shape{16, 768}));
  const Tensor p12 = patchify<float>(img, 12);
  EXPECT_EQ(p12.shape(), (Shape{36, 432}));
}

TEST(Patchify, SingleTileIsTheFlattenedImage) {
  Rng rng(2);
  const Image img = random_image(8, rng);
  const Tensor p = patchify<float>(img, 8);
  ASSERT_EQ(p.shape(), (Shape{1, 192}));
  EXPECT_TRUE(std::equal(img.pixels.begin(), img.pixels.end(), p.data().begin()));
}

TEST(Patchify, TileOrderMatchesLoopOracleAndDropsRemainder) {
  Rng rng(3);
  const Image img = random_image(72, rng);
  const std::size_t P = 16;
  const Tensor p = patchify<float>(img, P);
  std::size_t row = 0;
  for (std::size_t ty = 0; ty < 4; ++ty) {
    for (std::size_t tx = 0; tx < 4; ++tx, ++row) {
      std::size_t col = 0;
      for (std::size_t r = 0; r < P; ++r) {
        for (std::size_t c = 0; c < P; ++c) {
          for (std::size_t ch = 0; ch < 3; ++ch, ++col) {
            ASSERT_EQ(p.at(row, col), img.at(ty * P + r, tx * P + c, ch));
          }
        }
      }
    }
  }
}

TEST(Patchify, PatchLargerThanImageIsAConfigError) {
  Rng rng(4);
  EXPECT_THROW(patchify<float>(random_image(8, rng), 16), ConfigError);
}

TEST(ViTConfig, ValidationRejectsImpossibleModels) {
  ViTConfig c;
  EXPECT_NO_THROW(c.validate());
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ViTConfig{};
  c.patch_size = 80;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ViTConfig{};
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ViTConfig{};
  EXPECT_EQ(c.mlp_dims(), (std::vector<std::size_t>{128, 64}));
  EXPECT_EQ(c.num_patches(), 81u);
}

TEST(ViTParams, DefaultParameterCount) {
  // Hand count for S=72, P=8, D=64, H=2, L=8, C=4, MLP [128, 64], head [2048, 1024].
  const std::size_t D = 64;
  const std::size_t patch_projection = 192 * D + D;
  const std::size_t embeddings = 82 * D + D;
  const std::size_t per_layer = 4 * D + 4 * (D * D + D) + (D * 128 + 128) + (128 * D + D);
  const std::size_t final_norm = 2 * D;
  const std::size_t head = (D * 2048 + 2048) + (2048 * 1024 + 1024) + (1024 * 4 + 4);
  const std::size_t expected = patch_projection + embeddings + 8 * per_layer + final_norm + head;
  EXPECT_EQ(expected, 2520964u);

  const ViTConfig config;
  EXPECT_EQ(parameter_count(config), expected);
  const auto params = ViTParams<float>::zeros(config);
  std::size_t allocated = 0;
  for (const auto& nt : params.named_tensors()) {
    allocated += nt.tensor.numel();
  }
  EXPECT_EQ(allocated, expected);
}

TEST(ViTParams, ClosedFormCountMatchesAllocationAcrossConfigs) {
  for (std::size_t patch : {8u, 12u, 16u}) {
    for (std::size_t heads : {2u, 4u, 8u}) {
      for (std::size_t layers : {1u, 3u}) {
        ViTConfig c;
        c.patch_size = patch;
        c.num_heads = heads;
        c.num_layers = layers;
        c.head_hidden = {32};
        c.mlp_hidden = {96, 64};
        EXPECT_EQ(parameter_count(c), ViTParams<float>::zeros(c).parameter_count());
      }
    }
  }
}

TEST(ViTParams, NamesAreUniqueAndShapesFollowConfig) {
  const ViTConfig c = tiny_config(3, {16, 8});
  const auto params = ViTParams<float>::zeros(c);
  std::set<std::string> names;
  for (const auto& nt : params.named_tensors()) {
    EXPECT_TRUE(names.insert(nt.name).second) << nt.name;
  }
  EXPECT_TRUE(names.contains("patch_projection.weight"));
  EXPECT_TRUE(names.contains("layers.1.query.bias"));
  EXPECT_EQ(params.patch_projection.weight.shape(), (Shape{192, 8}));
  EXPECT_EQ(params.positional_embedding.shape(), (Shape{5, 8}));
  EXPECT_EQ(params.class_token.shape(), (Shape{1, 8}));
  EXPECT_EQ(params.head.back().weight.shape(), (Shape{8, 3}));
}

TEST(InitParams, DeterministicAndStatisticallySane) {
  const ViTConfig config;
  const auto a = init_params(config, 9);
  const auto b = init_params(config, 9);
  const auto c = init_params(config, 10);
  const auto na = a.named_tensors();
  const auto nb = b.named_tensors();
  const auto nc = c.named_tensors();
  bool any_difference = false;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t draws = 0;
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto& name = na[i].name;
    const auto va = na[i].tensor.data();
    ASSERT_TRUE(std::equal(va.begin(), va.end(), nb[i].tensor.data().begin())) << name;
    any_difference =
        any_difference || !std::equal(va.begin(), va.end(), nc[i].tensor.data().begin());
    if (name.find("gamma") != std::string::npos) {
      for (float v : va) {
        ASSERT_EQ(v, 1.0f) << name;
      }
    } else if (name.find("bias") != std::string::npos || name.find("beta") != std::string::npos) {
      for (float v : va) {
        ASSERT_EQ(v, 0.0f) << name;
      }
    } else {
      for (float v : va) {
        ASSERT_LE(std::abs(v), 0.04f) << name;
        sum += v;
        sum_sq += static_cast<double>(v) * v;
        ++draws;
      }
    }
  }
  EXPECT_TRUE(any_difference);
  ASSERT_GE(draws, 10000u);
  const double mean = sum / static_cast<double>(draws);
  const double stddev = std::sqrt(sum_sq / static_cast<double>(draws) - mean * mean);
  EXPECT_GE(stddev, 0.015);
  EXPECT_LE(stddev, 0.025);
}

TEST(EncodePatches, ZeroInputsGiveZeroOrPositionalRows) {
  const ViTConfig c = tiny_config();
  auto params = ViTParams<float>::zeros(c);
  const Tensor patches = Tensor::zeros({c.num_patches(), c.patch_dim()});
  const Tensor zero_seq = encode_patches(patches, params, 1);
  for (float v : zero_seq.data()) {
    EXPECT_EQ(v, 0.0f);
  }
  Rng rng(5);
  params.positional_embedding = random_tensor({c.sequence_length(), 8}, rng);
  const Tensor seq = encode_patches(patches, params, 1);
  for (std::size_t i = 0; i < c.num_patches(); ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      EXPECT_EQ(seq.at(i, j), params.positional_embedding.at(i + 1, j));
    }
  }
}

TEST(EncodePatches, IdentityProjectionPassesPatchesThrough) {
  ViTConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.projection_dim = 48;  // equals the patch length
  c.num_heads = 2;
  c.num_layers = 1;
  c.head_hidden = {};
  auto params = ViTParams<float>::zeros(c);
  std::vector<float> eye(48 * 48, 0.0f);
  for (std::size_t i = 0; i < 48; ++i) {
    eye[i * 48 + i] = 1.0f;
  }
  params.patch_projection.weight = Tensor({48, 48}, eye);
  Rng rng(6);
  params.positional_embedding = random_tensor({5, 48}, rng);
  const Image img = random_image(8, rng);
  const Tensor patches = patchify<float>(img, 4);
  const Tensor seq = encode_patches(patches, params, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 48; ++j) {
      EXPECT_FLOAT_EQ(seq.at(i, j), patches.at(i, j) + params.positional_embedding.at(i + 1, j));
    }
  }
}

TEST(ClassToken, PrependedRowIsTokenPlusPosition) {
  ViTConfig c = tiny_config();
  c.image_size = 8;  // N = 1
  auto params = ViTParams<float>::zeros(c);
  const Tensor seq({1, 8}, std::vector<float>(8, 3.0f));
  Tensor out = prepend_class_token(seq, params, 1);
  ASSERT_EQ(out.shape(), (Shape{2, 8}));
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(out.at(0, j), 0.0f);
    EXPECT_EQ(out.at(1, j), 3.0f);
  }
  Rng rng(7);
  params.class_token = random_tensor({1, 8}, rng);
  params.positional_embedding = random_tensor({2, 8}, rng);
  out = prepend_class_token(seq, params, 1);
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(out.at(0, j), params.class_token.at(0, j) + params.positional_embedding.at(0, j));
    EXPECT_EQ(out.at(1, j), 3.0f);
  }
}

TEST(EncoderBlock, ZeroSublayersAreTheIdentity) {
  const ViTConfig c = tiny_config();
  const auto params = ViTParams<float>::zeros(c);
  Rng rng(8);
  const Tensor x = random_tensor({2 * 5, 8}, rng, -3.0, 3.0);
  const Tensor y = encoder_block(x, params.layers[0], c, 2);
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST(EncoderBlock, DeterministicWithoutDropout) {
  const ViTConfig c = tiny_config();
  const auto params = init_params(c, 3);
  Rng rng(9);
  const Tensor x = random_tensor({5, 8}, rng);
  const Tensor a = encoder_block(x, params.layers[0], c, 1);
  const Tensor b = encoder_block(x, params.layers[0], c, 1);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(EncoderBlock, InputGradientMatchesFiniteDifferences) {
  ViTConfig c = tiny_config();
  c.projection_dim = 4;
  c.mlp_hidden = {8, 4};
  auto params = ViTParams<double>::zeros(c);
  Rng rng(10);
  randomize(params, rng, 0.5);
  std::vector<double> xs(2 * 4);
  for (auto& v : xs) {
    v = rng.uniform(-1.0, 1.0);
  }
  const Tensor64 x({2, 4}, xs, true);
  const double err = grad_check<double>(
      [&](const Tensor64& in) { return ops::sum(encoder_block(in, params.layers[0], c, 1)); }, x,
      1e-3);
  EXPECT_LT(err, 1e-3);
}

TEST(Forward, LogitShapeAndEvalDeterminism) {
  const ViTConfig c = tiny_config(4, {16});
  const auto params = init_params(c, 11);
  Rng rng(12);
  const Image img = random_image(16, rng);
  const Tensor a = forward<float>(img, params, c);
  EXPECT_EQ(a.shape(), (Shape{4}));
  const Tensor b = forward<float>(img, params, c);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Forward, BatchRowsMatchSingleImageCalls) {
  const ViTConfig c = tiny_config(3, {16});
  const auto params = init_params(c, 13);
  Rng rng(14);
  const std::vector<Image> images{random_image(16, rng), random_image(16, rng),
                                  random_image(16, rng)};
  const Tensor batch = forward<float>(std::span<const Image>(images), params, c);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Tensor single = forward<float>(images[b], params, c);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(batch.at(b, k), single[k], 1e-5);
    }
  }
}

TEST(Forward, WrongImageSizeIsAnInputError) {
  const ViTConfig c = tiny_config();
  const auto params = init_params(c, 1);
  Rng rng(15);
  EXPECT_THROW(forward<float>(random_image(24, rng), params, c), InputError);
}

TEST(Forward, PatchOrderDoesNotMatterWithoutPositions) {
  ViTConfig c = tiny_config(4, {16});
  c.image_size = 32;  // 16 patches
  auto params = init_params(c, 16);
  Rng rng(17);
  randomize(params, rng, 0.3);
  params.positional_embedding = Tensor::zeros(params.positional_embedding.shape());
  const Tensor patches = patchify<float>(random_image(32, rng), 8);
  const Tensor base = forward_patches(patches, 1, params, c);
  std::vector<std::size_t> order(16);
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 20; ++trial) {
    rng.shuffle(std::span<std::size_t>(order));
    const Tensor permuted = forward_patches(ops::take_rows(patches, order), 1, params, c);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(permuted[k], base[k], 1e-5);
    }
  }
}

TEST(Forward, DropoutOnlyActsInTrainingMode) {
  ViTConfig c = tiny_config(4, {16});
  c.dropout_rate = 0.5f;
  const auto params = init_params(c, 18);
  Rng img_rng(19);
  const Image img = random_image(16, img_rng);
  const Tensor e1 = forward<float>(img, params, c);
  const Tensor e2 = forward<float>(img, params, c);
  EXPECT_TRUE(std::equal(e1.data().begin(), e1.data().end(), e2.data().begin()));
  Rng rng(20);
  const Tensor t = forward<float>(img, params, c, {Mode::kTrain, &rng, nullptr});
  EXPECT_FALSE(std::equal(e1.data().begin(), e1.data().end(), t.data().begin()));
  EXPECT_THROW(forward<float>(img, params, c, {Mode::kTrain, nullptr, nullptr}), ContractError);
}

TEST(Forward, FullModelGradientMatchesFiniteDifferences) {
  const ViTConfig c = tiny_config(3, {16, 8});
  auto params = init_params(c, 21).cast<double>();
  Rng rng(22);
  randomize(params, rng, 0.5);
  const std::vector<Image> images{random_image(16, rng), random_image(16, rng)};
  const std::vector<std::size_t> labels{2, 0};
  auto named = params.named_tensors();
  for (auto& nt : named) {
    nt.tensor.set_requires_grad(true);
  }
  const auto report = grad_check_all<double>(
      [&] {
        return cross_entropy<double>(forward<double>(std::span<const Image>(images), params, c),
                                     labels);
      },
      named, 1e-3);
  EXPECT_EQ(report.coordinates, parameter_count(c));
  EXPECT_LT(report.max_relative_error, 1e-3)
      << report.worst_tensor << "[" << report.worst_index << "]";
}

}  // namespace
}  // namespace patchcraft
