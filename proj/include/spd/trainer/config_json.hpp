#pragma once

#include <json.hpp>

#include "spd/core/types.hpp"
#include "spd/trainer/trainer.hpp"

namespace spd::trainer {

nlohmann::json model_config_to_json(const ModelConfig& c);

/// Missing keys keep their defaults; unknown keys throw
/// std::invalid_argument naming the key. The result is checked.
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Throws std::invalid_argument naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& where);

}  // namespace spd::trainer
