#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdformer/model.hpp"
#include "gdformer/scoring.hpp"
#include "gdformer/training.hpp"

namespace gdformer {

struct DataConfig {
  std::string train_csv;
  std::string test_csv;
  std::string test_labels;
  bool has_header = true;
  double train_fraction = 1.0;  // leading fraction of train_csv used for fitting
};

struct SynthConfig {
  std::size_t channels = 5;
  std::size_t length = 20000;
  std::size_t train_length = 0;  // 0 -> length
  double noise_sigma = 0.1;
  double anomaly_rate = 0.05;
  double train_anomaly_rate = 0.0;
  double point_fraction = 0.5;
  std::size_t segment_min = 20;
  std::size_t segment_max = 50;
};

struct ScoringConfig {
  double delta = 1.0;
  Calibration calibration = Calibration::Combined;
  ScoreScope scope = ScoreScope::Window;
  bool dump_attention = false;
  std::size_t attention_window = 0;
};

// The single config surface for every command. JSON schema documented in
// the README; unknown keys are an error.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string checkpoint;  // input checkpoint (detect/evaluate/transfer)
  DataConfig data;
  SynthConfig synth;
  ModelConfig model;  // channels 0 -> inferred from data
  TrainConfig train;
  ScoringConfig scoring;

  nlohmann::json to_json() const;
  void validate() const;
};

RunConfig default_run_config();

// Recursive merge of a partial JSON document into `cfg`; unknown keys and
// type mismatches raise ConfigError with the offending key path.
void merge_run_config(RunConfig& cfg, const nlohmann::json& patch);
nlohmann::json load_config_json(const std::string& path);
RunConfig load_run_config(const std::string& path);

// Dotted-path override, e.g. ("scoring.delta", "0.5"); the value is parsed
// as JSON, falling back to a plain string.
void apply_override(RunConfig& cfg, const std::string& key_path, const std::string& value);

std::vector<std::string> preset_names();
nlohmann::json preset_json(const std::string& name);
void apply_preset(RunConfig& cfg, const std::string& name);

}  // namespace gdformer
