#include <cstring>
#include <fstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "patchcraft/checkpoint.hpp"
#include "patchcraft/errors.hpp"
#include "support.hpp"

namespace patchcraft {
namespace {

using testing::read_bytes;
using testing::TempDir;
using testing::tiny_config;

Checkpoint sample_checkpoint() {
  Checkpoint ckpt;
  ckpt.model_config = tiny_config(3, {16, 8});
  ckpt.model_config.dropout_rate = 0.125f;
  ckpt.train_config.seed = 1234567890123ull;
  ckpt.train_config.learning_rate = 3e-4f;
  ckpt.train_config.augment = false;
  ckpt.class_names = {"alluvial", "black", "clay"};
  ckpt.norm_stats.mean = {0.1f, 0.2f, 0.3f};
  ckpt.norm_stats.stddev = {0.4f, 0.5f, 0.6f};
  ckpt.params = init_params(ckpt.model_config, 77);
  return ckpt;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

TEST(Checkpoint, RoundTripIsBitwise) {
  TempDir dir("ckpt");
  const Checkpoint ckpt = sample_checkpoint();
  save_checkpoint(dir / "a.vitc", ckpt);
  const Checkpoint back = load_checkpoint(dir / "a.vitc");
  EXPECT_EQ(back.model_config, ckpt.model_config);
  EXPECT_EQ(back.train_config, ckpt.train_config);
  EXPECT_EQ(back.class_names, ckpt.class_names);
  EXPECT_EQ(back.norm_stats.mean, ckpt.norm_stats.mean);
  EXPECT_EQ(back.norm_stats.stddev, ckpt.norm_stats.stddev);
  const auto a = ckpt.params.named_tensors();
  const auto b = back.params.named_tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].tensor.shape(), b[i].tensor.shape());
    EXPECT_EQ(std::memcmp(a[i].tensor.data().data(), b[i].tensor.data().data(),
                          a[i].tensor.numel() * sizeof(float)),
              0)
        << a[i].name;
  }
  // Saving what was loaded reproduces the file byte for byte.
  save_checkpoint(dir / "b.vitc", back);
  EXPECT_EQ(read_bytes(dir / "a.vitc"), read_bytes(dir / "b.vitc"));
}

TEST(Checkpoint, FileLayout) {
  TempDir dir("layout");
  const Checkpoint ckpt = sample_checkpoint();
  save_checkpoint(dir / "a.vitc", ckpt);
  const auto bytes = read_bytes(dir / "a.vitc");
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VITC");
  EXPECT_EQ(read_u32(bytes, 4), 1u);
  const std::uint32_t json_len = read_u32(bytes, 8);
  const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + json_len);
  EXPECT_TRUE(header.contains("model"));
  EXPECT_TRUE(header.contains("train"));
  EXPECT_EQ(header.at("class_names").get<std::vector<std::string>>(), ckpt.class_names);

  // First record: u16 name length, name, u8 ndim, u32 dims, f32 data.
  std::size_t at = 12 + json_len;
  const std::size_t name_len = bytes[at] | bytes[at + 1] << 8;
  at += 2;
  EXPECT_EQ(std::string(bytes.begin() + at, bytes.begin() + at + name_len),
            "patch_projection.weight");
  at += name_len;
  ASSERT_EQ(bytes[at], 2);
  EXPECT_EQ(read_u32(bytes, at + 1), 192u);
  EXPECT_EQ(read_u32(bytes, at + 5), 8u);
  float first = 0.0f;
  const std::uint32_t raw = read_u32(bytes, at + 9);
  std::memcpy(&first, &raw, sizeof(first));
  EXPECT_EQ(first, ckpt.params.patch_projection.weight[0]);

  std::size_t expected_size = 12 + json_len;
  for (const auto& nt : ckpt.params.named_tensors()) {
    expected_size += 2 + nt.name.size() + 1 + 4 * nt.tensor.rank() + 4 * nt.tensor.numel();
  }
  EXPECT_EQ(bytes.size(), expected_size);
}

TEST(Checkpoint, CorruptMagicAndVersion) {
  TempDir dir("corrupt");
  save_checkpoint(dir / "a.vitc", sample_checkpoint());
  auto bytes = read_bytes(dir / "a.vitc");
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write_bytes(dir / "magic.vitc", bad_magic);
  EXPECT_THROW(load_checkpoint(dir / "magic.vitc"), CheckpointError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  write_bytes(dir / "version.vitc", bad_version);
  try {
    load_checkpoint(dir / "version.vitc");
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(dir / "missing.vitc"), CheckpointError);
}

TEST(Checkpoint, TruncationNamesTheTensorAndOffset) {
  TempDir dir("truncated");
  const Checkpoint ckpt = sample_checkpoint();
  save_checkpoint(dir / "a.vitc", ckpt);
  auto bytes = read_bytes(dir / "a.vitc");
  // Cut in the middle of the last tensor's data.
  const auto& last = ckpt.params.head.back().bias;
  bytes.resize(bytes.size() - last.numel() * 4 / 2 - 2);
  write_bytes(dir / "cut.vitc", bytes);
  try {
    load_checkpoint(dir / "cut.vitc");
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("head.2.bias"), std::string::npos) << msg;
    EXPECT_NE(msg.find("offset"), std::string::npos) << msg;
  }
}

TEST(Checkpoint, MissingTensorIsAnError) {
  TempDir dir("missing_tensor");
  const Checkpoint ckpt = sample_checkpoint();
  save_checkpoint(dir / "a.vitc", ckpt);
  const Container c = read_container(dir / "a.vitc", kViTMagic);
  std::vector<NamedTensor<float>> fewer;
  for (std::size_t i = 0; i + 1 < c.tensors.size(); ++i) {
    fewer.push_back({c.tensors[i].name, Tensor(c.tensors[i].shape, c.tensors[i].data)});
  }
  write_container(dir / "fewer.vitc", kViTMagic, c.json, fewer);
  EXPECT_THROW(load_checkpoint(dir / "fewer.vitc"), CheckpointError);
}

TEST(Checkpoint, SvmContainerIsNotAViTCheckpoint) {
  TempDir dir("svm_magic");
  const std::vector<NamedTensor<float>> none;
  write_container(dir / "s.svmc", kSvmMagic, "{}", none);
  EXPECT_THROW(load_checkpoint(dir / "s.svmc"), CheckpointError);
  EXPECT_NO_THROW(read_container(dir / "s.svmc", kSvmMagic));
}

}  // namespace
}  // namespace patchcraft
