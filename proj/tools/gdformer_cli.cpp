// Command-line front end. Everything goes through the C API in gdformer.h;
// exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdformer.h"

namespace {

struct ConfigDeleter {
  void operator()(gdf_config* c) const { gdf_config_free(c); }
};
using ConfigPtr = std::unique_ptr<gdf_config, ConfigDeleter>;

int report(gdf_status status) {
  if (status == GDF_OK) return 0;
  std::fprintf(stderr, "error: %s\n", gdf_last_error());
  return status == GDF_ERR_CONFIG ? 1 : 2;
}

std::string layers_to_json(const std::string& list) {
  std::string out = "[";
  std::string cur;
  for (char ch : list + ",") {
    if (ch == ',') {
      if (!cur.empty()) {
        if (out.size() > 1) out += ",";
        out += cur;
        cur.clear();
      }
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  return out + "]";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GDformer: dictionary-based transformer for multivariate time-series "
               "anomaly detection"};
  app.footer("Config precedence: defaults < --preset < --config < flags < --set.");

  std::string command;
  app.add_option("command", command, "synth | train | detect | evaluate | transfer | ablate | bench | gradcheck")
      ->required();

  std::string config_path, preset, out_dir, checkpoint;
  std::string train_csv, test_csv, test_labels;
  std::string calibration, attention, criterion, metric, layers;
  double delta = -1.0, lambda = -1.0;
  long long seed = -1, epochs = -1;
  std::vector<std::string> sets;

  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--preset", preset, "msl | smap | swat | psm | synth");
  app.add_option("--seed", seed, "global seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--checkpoint", checkpoint, "input checkpoint path");
  app.add_option("--train-csv", train_csv, "training data CSV");
  app.add_option("--test-csv", test_csv, "test data CSV");
  app.add_option("--test-labels", test_labels, "test labels CSV");
  app.add_option("--delta", delta, "threshold quantile, top delta percent");
  app.add_option("--lambda", lambda, "loss trade-off weight");
  app.add_option("--epochs", epochs, "training epochs");
  app.add_option("--calibration", calibration, "test | combined");
  app.add_option("--attention", attention, "dictionary | self");
  app.add_option("--criterion", criterion, "recon | sim");
  app.add_option("--metric", metric, "dot | kl | js");
  app.add_option("--layers", layers, "similarity layers, e.g. 1,2");
  app.add_option("--set", sets, "explicit override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  gdf_config* raw = nullptr;
  if (gdf_config_create(&raw) != GDF_OK) return report(GDF_ERR_RUNTIME);
  ConfigPtr cfg(raw);

  if (!preset.empty() && gdf_config_apply_preset(cfg.get(), preset.c_str()) != GDF_OK)
    return report(GDF_ERR_CONFIG);
  if (!config_path.empty() && gdf_config_merge_file(cfg.get(), config_path.c_str()) != GDF_OK)
    return report(GDF_ERR_CONFIG);

  auto set = [&](const char* key, const std::string& value) {
    return gdf_config_override(cfg.get(), key, value.c_str());
  };
  gdf_status st = GDF_OK;
  if (st == GDF_OK && seed >= 0) st = set("seed", std::to_string(seed));
  if (st == GDF_OK && !out_dir.empty()) st = set("out", "\"" + out_dir + "\"");
  if (st == GDF_OK && !checkpoint.empty()) st = set("checkpoint", "\"" + checkpoint + "\"");
  if (st == GDF_OK && !train_csv.empty()) st = set("data.train_csv", "\"" + train_csv + "\"");
  if (st == GDF_OK && !test_csv.empty()) st = set("data.test_csv", "\"" + test_csv + "\"");
  if (st == GDF_OK && !test_labels.empty())
    st = set("data.test_labels", "\"" + test_labels + "\"");
  if (st == GDF_OK && delta >= 0.0) st = set("scoring.delta", std::to_string(delta));
  if (st == GDF_OK && lambda >= 0.0) st = set("train.lambda", std::to_string(lambda));
  if (st == GDF_OK && epochs >= 0) st = set("train.epochs", std::to_string(epochs));
  if (st == GDF_OK && !calibration.empty())
    st = set("scoring.calibration", "\"" + calibration + "\"");
  if (st == GDF_OK && !attention.empty()) st = set("model.attention", "\"" + attention + "\"");
  if (st == GDF_OK && !criterion.empty()) st = set("train.criterion", "\"" + criterion + "\"");
  if (st == GDF_OK && !metric.empty()) st = set("model.metric", "\"" + metric + "\"");
  if (st == GDF_OK && !layers.empty())
    st = set("model.similarity_layers", layers_to_json(layers));
  for (const std::string& kv : sets) {
    if (st != GDF_OK) break;
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      return 1;
    }
    st = set(kv.substr(0, eq).c_str(), kv.substr(eq + 1));
  }
  if (st != GDF_OK) return report(st);

  return report(gdf_run(command.c_str(), cfg.get()));
}
