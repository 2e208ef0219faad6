#include "gdformer/run_config.hpp"

#include <fstream>

#include "gdformer/config_json.hpp"
#include "gdformer/errors.hpp"

namespace gdformer {

namespace {

std::string cal_to_string(Calibration c) {
  return c == Calibration::Test ? "test" : "combined";
}
Calibration cal_from_string(const std::string& s) {
  if (s == "test") return Calibration::Test;
  if (s == "combined") return Calibration::Combined;
  throw ConfigError("unknown calibration '" + s + "' (expected test or combined)");
}
std::string scope_to_string(ScoreScope s) {
  return s == ScoreScope::Window ? "window" : "series";
}
ScoreScope scope_from_string(const std::string& s) {
  if (s == "window") return ScoreScope::Window;
  if (s == "series") return ScoreScope::Series;
  throw ConfigError("unknown softmax_scope '" + s + "' (expected window or series)");
}

// Merge `patch` into `base` (both objects), erroring on keys that do not
// exist in `base` and on JSON type mismatches.
void merge_json(nlohmann::json& base, const nlohmann::json& patch, const std::string& path) {
  for (const auto& [key, value] : patch.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + full + "'");
    nlohmann::json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object())
        throw ConfigError("config key '" + full + "' must be an object");
      merge_json(slot, value, full);
      continue;
    }
    const bool num_ok = slot.is_number() && value.is_number();
    const bool bool_ok = slot.is_boolean() && value.is_boolean();
    const bool str_ok = slot.is_string() && value.is_string();
    const bool arr_ok = slot.is_array() && value.is_array();
    if (!(num_ok || bool_ok || str_ok || arr_ok))
      throw ConfigError("config key '" + full + "' has wrong type (got " +
                        std::string(value.type_name()) + ", expected " +
                        std::string(slot.type_name()) + ")");
    if (slot.is_number_unsigned() && value.is_number() && !value.is_number_unsigned()) {
      const double d = value.get<double>();
      if (d < 0.0 || d != static_cast<double>(static_cast<std::uint64_t>(d)))
        throw ConfigError("config key '" + full + "' must be a non-negative integer");
      slot = static_cast<std::uint64_t>(d);
      continue;
    }
    slot = value;
  }
}

RunConfig from_json_full(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.out = j.at("out").get<std::string>();
  cfg.checkpoint = j.at("checkpoint").get<std::string>();
  const auto& d = j.at("data");
  cfg.data.train_csv = d.at("train_csv").get<std::string>();
  cfg.data.test_csv = d.at("test_csv").get<std::string>();
  cfg.data.test_labels = d.at("test_labels").get<std::string>();
  cfg.data.has_header = d.at("has_header").get<bool>();
  cfg.data.train_fraction = d.at("train_fraction").get<double>();
  const auto& s = j.at("synth");
  cfg.synth.channels = s.at("channels").get<std::size_t>();
  cfg.synth.length = s.at("length").get<std::size_t>();
  cfg.synth.train_length = s.at("train_length").get<std::size_t>();
  cfg.synth.noise_sigma = s.at("noise_sigma").get<double>();
  cfg.synth.anomaly_rate = s.at("anomaly_rate").get<double>();
  cfg.synth.train_anomaly_rate = s.at("train_anomaly_rate").get<double>();
  cfg.synth.point_fraction = s.at("point_fraction").get<double>();
  cfg.synth.segment_min = s.at("segment_min").get<std::size_t>();
  cfg.synth.segment_max = s.at("segment_max").get<std::size_t>();
  cfg.model = model_config_from_json(j.at("model"));
  cfg.train = train_config_from_json(j.at("train"));
  const auto& sc = j.at("scoring");
  cfg.scoring.delta = sc.at("delta").get<double>();
  cfg.scoring.calibration = cal_from_string(sc.at("calibration").get<std::string>());
  cfg.scoring.scope = scope_from_string(sc.at("softmax_scope").get<std::string>());
  cfg.scoring.dump_attention = sc.at("dump_attention").get<bool>();
  cfg.scoring.attention_window = sc.at("attention_window").get<std::size_t>();
  return cfg;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["out"] = out;
  j["checkpoint"] = checkpoint;
  j["data"] = {{"train_csv", data.train_csv},
               {"test_csv", data.test_csv},
               {"test_labels", data.test_labels},
               {"has_header", data.has_header},
               {"train_fraction", data.train_fraction}};
  j["synth"] = {{"channels", synth.channels},
                {"length", synth.length},
                {"train_length", synth.train_length},
                {"noise_sigma", synth.noise_sigma},
                {"anomaly_rate", synth.anomaly_rate},
                {"train_anomaly_rate", synth.train_anomaly_rate},
                {"point_fraction", synth.point_fraction},
                {"segment_min", synth.segment_min},
                {"segment_max", synth.segment_max}};
  j["model"] = model_config_to_json(model);
  j["train"] = train_config_to_json(train);
  j["scoring"] = {{"delta", scoring.delta},
                  {"calibration", cal_to_string(scoring.calibration)},
                  {"softmax_scope", scope_to_string(scoring.scope)},
                  {"dump_attention", scoring.dump_attention},
                  {"attention_window", scoring.attention_window}};
  return j;
}

void RunConfig::validate() const {
  ModelConfig m = model;
  if (m.channels == 0) m.channels = 1;  // resolved later from the data
  m.validate();
  train.validate();
  if (scoring.delta <= 0.0 || scoring.delta > 100.0)
    throw ConfigError("scoring.delta must be in (0, 100], got " + std::to_string(scoring.delta));
  if (data.train_fraction <= 0.0 || data.train_fraction > 1.0)
    throw ConfigError("data.train_fraction must be in (0, 1]");
  if (synth.anomaly_rate < 0.0 || synth.anomaly_rate >= 1.0)
    throw ConfigError("synth.anomaly_rate must be in [0, 1)");
  if (synth.train_anomaly_rate < 0.0 || synth.train_anomaly_rate >= 1.0)
    throw ConfigError("synth.train_anomaly_rate must be in [0, 1)");
  if (synth.point_fraction < 0.0 || synth.point_fraction > 1.0)
    throw ConfigError("synth.point_fraction must be in [0, 1]");
  if (synth.segment_min < 1 || synth.segment_max < synth.segment_min)
    throw ConfigError("synth.segment_min..segment_max is not a valid range");
  if (out.empty()) throw ConfigError("out directory must not be empty");
}

RunConfig default_run_config() { return RunConfig{}; }

void merge_run_config(RunConfig& cfg, const nlohmann::json& patch) {
  if (!patch.is_object()) throw ConfigError("config root must be a JSON object");
  nlohmann::json base = cfg.to_json();
  merge_json(base, patch, "");
  try {
    cfg = from_json_full(base);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
}

nlohmann::json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.find_first_not_of(" \t\r\n") == std::string::npos)
    return nlohmann::json::object();  // empty file -> all defaults
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
  return j;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg = default_run_config();
  merge_run_config(cfg, load_config_json(path));
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& key_path, const std::string& value) {
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;  // bare strings
  nlohmann::json patch;
  nlohmann::json* slot = &patch;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key_path.find('.', start);
    const std::string part = key_path.substr(start, dot - start);
    if (part.empty()) throw ConfigError("bad config key path '" + key_path + "'");
    if (dot == std::string::npos) {
      (*slot)[part] = parsed;
      break;
    }
    (*slot)[part] = nlohmann::json::object();
    slot = &(*slot)[part];
    start = dot + 1;
  }
  merge_run_config(cfg, patch);
}

// Table-style presets for the four benchmark datasets plus the synthetic
// suite; shipped as files under presets/ with identical content.
namespace {

const char* preset_text(const std::string& name) {
  if (name == "msl")
    return R"({
  "data": {"train_fraction": 0.8},
  "model": {"window": 100, "channels": 55, "embed_dim": 512, "layers": 3, "heads": 8,
            "dict_size": 16, "prototypes": 12, "mask_ratio": 0.05},
  "train": {"lambda": 3.0, "lr": 1e-4, "epochs": 10, "batch_size": 64},
  "scoring": {"delta": 0.8}
})";
  if (name == "smap")
    return R"({
  "data": {"train_fraction": 0.8},
  "model": {"window": 100, "channels": 25, "embed_dim": 512, "layers": 3, "heads": 8,
            "dict_size": 6, "prototypes": 12, "mask_ratio": 0.05},
  "train": {"lambda": 2.0, "lr": 1e-4, "epochs": 10, "batch_size": 64},
  "scoring": {"delta": 0.7}
})";
  if (name == "swat")
    return R"({
  "data": {"train_fraction": 0.8},
  "model": {"window": 100, "channels": 51, "embed_dim": 512, "layers": 3, "heads": 8,
            "dict_size": 8, "prototypes": 8, "mask_ratio": 0.05},
  "train": {"lambda": 2.0, "lr": 1e-4, "epochs": 10, "batch_size": 64},
  "scoring": {"delta": 0.5}
})";
  if (name == "psm")
    return R"({
  "data": {"train_fraction": 0.8},
  "model": {"window": 100, "channels": 25, "embed_dim": 512, "layers": 3, "heads": 8,
            "dict_size": 10, "prototypes": 10, "mask_ratio": 0.05},
  "train": {"lambda": 1.0, "lr": 1e-4, "epochs": 10, "batch_size": 64},
  "scoring": {"delta": 0.6}
})";
  if (name == "synth")
    return R"({
  "synth": {"channels": 5, "length": 20000, "noise_sigma": 0.1, "anomaly_rate": 0.05,
            "point_fraction": 0.5, "segment_min": 20, "segment_max": 50},
  "model": {"window": 100, "channels": 5, "embed_dim": 64, "layers": 2, "heads": 4,
            "dict_size": 8, "prototypes": 4, "mask_ratio": 0.05},
  "train": {"lambda": 2.0, "lr": 1e-4, "epochs": 10, "batch_size": 64},
  "scoring": {"delta": 5.0, "calibration": "test"}
})";
  return nullptr;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"msl", "smap", "swat", "psm", "synth"};
}

nlohmann::json preset_json(const std::string& name) {
  const char* text = preset_text(name);
  if (!text) throw ConfigError("unknown preset '" + name + "' (msl, smap, swat, psm, synth)");
  return nlohmann::json::parse(text);
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  merge_run_config(cfg, preset_json(name));
}

}  // namespace gdformer
