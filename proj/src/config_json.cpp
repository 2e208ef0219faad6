#include "gdformer/config_json.hpp"

#include "gdformer/errors.hpp"

namespace gdformer {

std::string to_string(Activation v) {
  return v == Activation::Relu ? "relu" : "gelu";
}
std::string to_string(AttentionMode v) {
  return v == AttentionMode::Dictionary ? "dictionary" : "self";
}
std::string to_string(SimilarityMetric v) {
  switch (v) {
    case SimilarityMetric::Dot: return "dot";
    case SimilarityMetric::Kl: return "kl";
    case SimilarityMetric::Js: return "js";
  }
  return "dot";
}
std::string to_string(Criterion v) {
  return v == Criterion::Recon ? "recon" : "sim";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "gelu") return Activation::Gelu;
  throw ConfigError("unknown activation '" + s + "' (expected relu or gelu)");
}
AttentionMode attention_from_string(const std::string& s) {
  if (s == "dictionary") return AttentionMode::Dictionary;
  if (s == "self") return AttentionMode::Self;
  throw ConfigError("unknown attention mode '" + s + "' (expected dictionary or self)");
}
SimilarityMetric metric_from_string(const std::string& s) {
  if (s == "dot") return SimilarityMetric::Dot;
  if (s == "kl") return SimilarityMetric::Kl;
  if (s == "js") return SimilarityMetric::Js;
  throw ConfigError("unknown similarity metric '" + s + "' (expected dot, kl or js)");
}
Criterion criterion_from_string(const std::string& s) {
  if (s == "recon") return Criterion::Recon;
  if (s == "sim") return Criterion::Sim;
  throw ConfigError("unknown criterion '" + s + "' (expected recon or sim)");
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["window"] = cfg.window;
  j["channels"] = cfg.channels;
  j["embed_dim"] = cfg.embed_dim;
  j["layers"] = cfg.layers;
  j["heads"] = cfg.heads;
  j["dict_size"] = cfg.dict_size;
  j["prototypes"] = cfg.prototypes;
  j["mask_ratio"] = cfg.mask_ratio;
  j["ffn_dim"] = cfg.ffn_dim;
  j["activation"] = to_string(cfg.activation);
  j["attention"] = to_string(cfg.attention);
  j["metric"] = to_string(cfg.metric);
  j["similarity_layers"] = cfg.similarity_layers;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.window = j.at("window").get<std::size_t>();
  cfg.channels = j.at("channels").get<std::size_t>();
  cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
  cfg.layers = j.at("layers").get<std::size_t>();
  cfg.heads = j.at("heads").get<std::size_t>();
  cfg.dict_size = j.at("dict_size").get<std::size_t>();
  cfg.prototypes = j.at("prototypes").get<std::size_t>();
  cfg.mask_ratio = j.at("mask_ratio").get<double>();
  cfg.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  cfg.activation = activation_from_string(j.at("activation").get<std::string>());
  cfg.attention = attention_from_string(j.at("attention").get<std::string>());
  cfg.metric = metric_from_string(j.at("metric").get<std::string>());
  cfg.similarity_layers = j.at("similarity_layers").get<std::vector<std::size_t>>();
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["lambda"] = cfg.lambda;
  j["lr"] = cfg.lr;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["criterion"] = to_string(cfg.criterion);
  j["use_recon_loss"] = cfg.use_recon_loss;
  j["use_sim_loss"] = cfg.use_sim_loss;
  j["grad_clip"] = cfg.grad_clip;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.lambda = j.at("lambda").get<double>();
  cfg.lr = j.at("lr").get<double>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.criterion = criterion_from_string(j.at("criterion").get<std::string>());
  cfg.use_recon_loss = j.at("use_recon_loss").get<bool>();
  cfg.use_sim_loss = j.at("use_sim_loss").get<bool>();
  cfg.grad_clip = j.at("grad_clip").get<double>();
  return cfg;
}

}  // namespace gdformer
