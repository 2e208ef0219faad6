#pragma once

#include <json.hpp>

#include "gdformer/model.hpp"
#include "gdformer/training.hpp"

namespace gdformer {

// JSON names match the run-config schema (see README).
nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

std::string to_string(Activation v);
std::string to_string(AttentionMode v);
std::string to_string(SimilarityMetric v);
std::string to_string(Criterion v);
Activation activation_from_string(const std::string& s);
AttentionMode attention_from_string(const std::string& s);
SimilarityMetric metric_from_string(const std::string& s);
Criterion criterion_from_string(const std::string& s);

}  // namespace gdformer
