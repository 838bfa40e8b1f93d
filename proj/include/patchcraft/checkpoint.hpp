#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchcraft/dataset.hpp"
#include "patchcraft/tensor.hpp"
#include "patchcraft/trainer.hpp"
#include "patchcraft/vit.hpp"

namespace patchcraft {

// Binary layout, all integers little-endian:
//   magic[4]  u32 version  u32 json_length  json[json_length]
//   then until EOF: u16 name_length  name  u8 ndim  u32 dims[ndim]  f32 data[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kViTMagic = "VITC";
inline constexpr std::string_view kSvmMagic = "SVMC";

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Container {
  std::string json;
  std::vector<TensorRecord> tensors;
};

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const std::string& json, std::span<const NamedTensor<float>> tensors);

// Throws CheckpointError (with the byte offset) on a wrong magic, unknown
// version, or truncated record.
Container read_container(const std::filesystem::path& path, std::string_view magic);

struct Checkpoint {
  ViTConfig model_config;
  TrainConfig train_config;
  std::vector<std::string> class_names;
  NormStats norm_stats;
  ViTParams<float> params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace patchcraft
