#pragma once

#include "json.hpp"
#include "patchcraft/dataset.hpp"
#include "patchcraft/trainer.hpp"
#include "patchcraft/vit.hpp"

// nlohmann::json adapters for the configuration and report types.
namespace patchcraft {

void to_json(nlohmann::json& j, const ViTConfig& c);
void from_json(const nlohmann::json& j, ViTConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);
void to_json(nlohmann::json& j, const EpochStats& s);
void to_json(nlohmann::json& j, const TrainReport& r);

}  // namespace patchcraft
