#include "patchcraft/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>

#include "patchcraft/errors.hpp"
#include "patchcraft/serialization.hpp"

namespace patchcraft {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>((v >> shift) & 0xFF));
  }
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

  std::uint64_t read_uint(std::size_t width, const std::string& what) {
    need(width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
  }

  std::string read_bytes(std::size_t n, const std::string& what) {
    need(n, what);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw CheckpointError(path_.string() + ": " + why + " at byte offset " +
                          std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) {
      fail("truncated " + what);
    }
  }

  const std::string& bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const std::string& json, std::span<const NamedTensor<float>> tensors) {
  std::string out(magic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for (const auto& [name, tensor] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max() || tensor.rank() > 255) {
      throw CheckpointError("cannot encode tensor " + name);
    }
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(tensor.rank()));
    for (std::size_t d : tensor.shape()) {
      put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (float v : tensor.data()) {
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw CheckpointError("cannot open " + path.string() + " for writing");
  }
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) {
    throw CheckpointError("failed writing " + path.string());
  }
}

Container read_container(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw CheckpointError("cannot open checkpoint " + path.string());
  }
  const std::string bytes{std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>()};
  Reader reader(bytes, path);
  const std::string found = reader.read_bytes(magic.size(), "magic");
  if (found != magic) {
    reader.fail("bad magic (expected " + std::string(magic) + ")");
  }
  const auto version = reader.read_uint(4, "version");
  if (version != kCheckpointVersion) {
    reader.fail("unsupported version " + std::to_string(version));
  }
  const auto json_length = reader.read_uint(4, "header length");
  Container container;
  container.json = reader.read_bytes(json_length, "JSON header");
  while (!reader.at_end()) {
    TensorRecord record;
    const auto name_length = reader.read_uint(2, "tensor name length");
    record.name = reader.read_bytes(name_length, "tensor name");
    const std::string label = "tensor '" + record.name + "'";
    const auto ndim = reader.read_uint(1, label + " rank");
    if (ndim == 0) {
      reader.fail(label + " has rank 0");
    }
    std::size_t count = 1;
    for (std::uint64_t i = 0; i < ndim; ++i) {
      const auto d = static_cast<std::size_t>(reader.read_uint(4, label + " shape"));
      if (d == 0) {
        reader.fail(label + " has a zero dim");
      }
      record.shape.push_back(d);
      count *= d;
    }
    if ((bytes.size() - reader.offset()) / 4 < count) {
      reader.fail("truncated data of " + label);
    }
    record.data.resize(count);
    for (float& v : record.data) {
      v = std::bit_cast<float>(static_cast<std::uint32_t>(reader.read_uint(4, label + " data")));
    }
    container.tensors.push_back(std::move(record));
  }
  return container;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["model"] = checkpoint.model_config;
  header["train"] = checkpoint.train_config;
  header["class_names"] = checkpoint.class_names;
  header["norm_stats"] = checkpoint.norm_stats;
  const auto tensors = checkpoint.params.named_tensors();
  write_container(path, kViTMagic, header.dump(), tensors);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Container container = read_container(path, kViTMagic);
  Checkpoint checkpoint;
  try {
    const auto header = nlohmann::json::parse(container.json);
    checkpoint.model_config = header.at("model").get<ViTConfig>();
    checkpoint.train_config = header.at("train").get<TrainConfig>();
    checkpoint.class_names = header.at("class_names").get<std::vector<std::string>>();
    checkpoint.norm_stats = header.at("norm_stats").get<NormStats>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad JSON header: " + e.what());
  }
  try {
    checkpoint.params = ViTParams<float>::zeros(checkpoint.model_config);
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  if (checkpoint.class_names.size() != checkpoint.model_config.num_classes) {
    throw CheckpointError(path.string() + ": class name count does not match the model");
  }
  std::map<std::string, TensorRecord*> by_name;
  for (auto& record : container.tensors) {
    by_name[record.name] = &record;
  }
  auto expected = checkpoint.params.named_tensors();
  if (expected.size() != container.tensors.size()) {
    throw CheckpointError(path.string() + ": expected " + std::to_string(expected.size()) +
                          " tensors, found " + std::to_string(container.tensors.size()));
  }
  for (auto& [name, tensor] : expected) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError(path.string() + ": missing tensor '" + name + "'");
    }
    if (it->second->shape != tensor.shape()) {
      throw CheckpointError(path.string() + ": tensor '" + name + "' has shape " +
                            shape_string(it->second->shape) + ", expected " +
                            shape_string(tensor.shape()));
    }
    std::copy(it->second->data.begin(), it->second->data.end(), tensor.mutable_data().begin());
  }
  return checkpoint;
}

// ---- JSON adapters ---------------------------------------------------------

void to_json(nlohmann::json& j, const ViTConfig& c) {
  j = {{"image_size", c.image_size},   {"patch_size", c.patch_size},
       {"projection_dim", c.projection_dim}, {"num_heads", c.num_heads},
       {"num_layers", c.num_layers},   {"num_classes", c.num_classes},
       {"mlp_hidden", c.mlp_hidden},   {"head_hidden", c.head_hidden},
       {"dropout_rate", c.dropout_rate}, {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::json& j, ViTConfig& c) {
  j.at("image_size").get_to(c.image_size);
  j.at("patch_size").get_to(c.patch_size);
  j.at("projection_dim").get_to(c.projection_dim);
  j.at("num_heads").get_to(c.num_heads);
  j.at("num_layers").get_to(c.num_layers);
  j.at("num_classes").get_to(c.num_classes);
  j.at("mlp_hidden").get_to(c.mlp_hidden);
  j.at("head_hidden").get_to(c.head_hidden);
  j.at("dropout_rate").get_to(c.dropout_rate);
  j.at("layer_norm_eps").get_to(c.layer_norm_eps);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size},       {"epochs", c.epochs},
       {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps},           {"seed", c.seed},
       {"augment", c.augment}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("batch_size").get_to(c.batch_size);
  j.at("epochs").get_to(c.epochs);
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  j.at("seed").get_to(c.seed);
  j.at("augment").get_to(c.augment);
}

void to_json(nlohmann::json& j, const NormStats& s) {
  j = {{"mean", s.mean}, {"std", s.stddev}};
}

void from_json(const nlohmann::json& j, NormStats& s) {
  j.at("mean").get_to(s.mean);
  j.at("std").get_to(s.stddev);
}

void to_json(nlohmann::json& j, const EpochStats& s) {
  j = {{"mean_loss", s.mean_loss}, {"train_accuracy", s.train_accuracy}};
}

void to_json(nlohmann::json& j, const TrainReport& r) {
  j = {{"epochs", r.epochs},
       {"final_train_accuracy", r.final_train_accuracy},
       {"test_accuracy", r.test_accuracy ? nlohmann::json(*r.test_accuracy) : nlohmann::json()},
       {"wall_seconds", r.wall_seconds},
       {"optimizer_steps", r.optimizer_steps},
       {"model_config", r.model_config},
       {"train_config", r.train_config}};
}

}  // namespace patchcraft
