#include "gdformer.h"

#include <cstring>
#include <string>

#include "gdformer/errors.hpp"
#include "gdformer/experiments.hpp"
#include "gdformer/rng.hpp"
#include "gdformer/run_config.hpp"
#include "gdformer/scoring.hpp"

using namespace gdformer;

struct gdf_config {
  RunConfig cfg;
};
struct gdf_dataset {
  TimeSeriesDataset ds;
};
struct gdf_model {
  Checkpoint ck;
};

namespace {

thread_local std::string g_last_error;

gdf_status fail(gdf_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename Fn>
gdf_status guarded(Fn&& fn) {
  try {
    fn();
    return GDF_OK;
  } catch (const ConfigError& e) {
    return fail(GDF_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(GDF_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(GDF_ERR_RUNTIME, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

gdf_status require(const void* p, const char* what) {
  if (p) return GDF_OK;
  return fail(GDF_ERR_CONFIG, std::string("null argument: ") + what);
}

}  // namespace

extern "C" {

const char* gdf_version(void) { return "1.0.0"; }

const char* gdf_last_error(void) { return g_last_error.c_str(); }

void gdf_string_free(char* s) { delete[] s; }

gdf_status gdf_config_create(gdf_config** out) {
  if (require(out, "out")) return GDF_ERR_CONFIG;
  return guarded([&] { *out = new gdf_config{default_run_config()}; });
}

gdf_status gdf_config_load_file(const char* path, gdf_config** out) {
  if (require(path, "path") || require(out, "out")) return GDF_ERR_CONFIG;
  return guarded([&] { *out = new gdf_config{load_run_config(path)}; });
}

gdf_status gdf_config_load_json(const char* json_text, gdf_config** out) {
  if (require(json_text, "json_text") || require(out, "out")) return GDF_ERR_CONFIG;
  return guarded([&] {
    nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON");
    RunConfig cfg = default_run_config();
    merge_run_config(cfg, j);
    *out = new gdf_config{std::move(cfg)};
  });
}

gdf_status gdf_config_apply_preset(gdf_config* cfg, const char* preset) {
  if (require(cfg, "cfg") || require(preset, "preset")) return GDF_ERR_CONFIG;
  return guarded([&] { apply_preset(cfg->cfg, preset); });
}

gdf_status gdf_config_merge_file(gdf_config* cfg, const char* path) {
  if (require(cfg, "cfg") || require(path, "path")) return GDF_ERR_CONFIG;
  return guarded([&] { merge_run_config(cfg->cfg, load_config_json(path)); });
}

gdf_status gdf_config_override(gdf_config* cfg, const char* key_path, const char* value) {
  if (require(cfg, "cfg") || require(key_path, "key_path") || require(value, "value"))
    return GDF_ERR_CONFIG;
  return guarded([&] { apply_override(cfg->cfg, key_path, value); });
}

gdf_status gdf_config_to_json(const gdf_config* cfg, char** out_json) {
  if (require(cfg, "cfg") || require(out_json, "out_json")) return GDF_ERR_CONFIG;
  return guarded([&] { *out_json = dup_string(cfg->cfg.to_json().dump(2)); });
}

void gdf_config_free(gdf_config* cfg) { delete cfg; }

gdf_status gdf_dataset_load_csv(const char* csv_path, int has_header,
                                const char* labels_path_or_null, gdf_dataset** out) {
  if (require(csv_path, "csv_path") || require(out, "out")) return GDF_ERR_CONFIG;
  return guarded([&] {
    *out = new gdf_dataset{load_csv(csv_path, has_header != 0,
                                    labels_path_or_null ? labels_path_or_null : "")};
  });
}

gdf_status gdf_dataset_synthesize(const gdf_config* cfg, int with_anomalies,
                                  gdf_dataset** out) {
  if (require(cfg, "cfg") || require(out, "out")) return GDF_ERR_CONFIG;
  return guarded([&] {
    const RunConfig& rc = cfg->cfg;
    SynthSpec spec;
    spec.channels = rc.synth.channels;
    spec.length = !with_anomalies && rc.synth.train_length ? rc.synth.train_length
                                                           : rc.synth.length;
    spec.noise_sigma = rc.synth.noise_sigma;
    spec.anomaly_rate = with_anomalies ? rc.synth.anomaly_rate : rc.synth.train_anomaly_rate;
    spec.point_fraction = rc.synth.point_fraction;
    spec.segment_min = rc.synth.segment_min;
    spec.segment_max = rc.synth.segment_max;
    spec.seed = Rng::mix(rc.seed, with_anomalies ? 4 : 3);
    *out = new gdf_dataset{generate_synthetic(spec)};
  });
}

uint64_t gdf_dataset_length(const gdf_dataset* ds) { return ds ? ds->ds.length : 0; }

uint64_t gdf_dataset_channels(const gdf_dataset* ds) { return ds ? ds->ds.channels : 0; }

void gdf_dataset_free(gdf_dataset* ds) { delete ds; }

gdf_status gdf_train(const gdf_config* cfg, const gdf_dataset* train, gdf_model** out) {
  if (require(cfg, "cfg") || require(train, "train") || require(out, "out"))
    return GDF_ERR_CONFIG;
  return guarded([&] {
    const RunConfig& rc = cfg->cfg;
    ModelConfig m = rc.model;
    if (m.channels == 0) m.channels = train->ds.channels;
    TrainConfig t = rc.train;
    t.seed = rc.seed;
    t.validate();
    *out = new gdf_model{fit(train->ds, m, t)};
  });
}

gdf_status gdf_transfer_train(const gdf_config* cfg, const gdf_model* source,
                              const gdf_dataset* target, gdf_model** out) {
  if (require(cfg, "cfg") || require(source, "source") || require(target, "target") ||
      require(out, "out"))
    return GDF_ERR_CONFIG;
  return guarded([&] {
    const RunConfig& rc = cfg->cfg;
    ModelConfig m = rc.model;
    if (m.channels == 0) m.channels = target->ds.channels;
    TrainConfig t = rc.train;
    t.seed = rc.seed;
    t.validate();
    *out = new gdf_model{transfer_fit(source->ck, target->ds, m, t)};
  });
}

gdf_status gdf_model_save(const gdf_model* model, const char* path) {
  if (require(model, "model") || require(path, "path")) return GDF_ERR_CONFIG;
  return guarded([&] { save_checkpoint(path, model->ck); });
}

gdf_status gdf_model_load(const char* path, gdf_model** out) {
  if (require(path, "path") || require(out, "out")) return GDF_ERR_CONFIG;
  return guarded([&] { *out = new gdf_model{load_checkpoint(path)}; });
}

void gdf_model_free(gdf_model* model) { delete model; }

gdf_status gdf_score(const gdf_model* model, const gdf_dataset* ds, double** out_scores,
                     uint64_t* out_len) {
  if (require(model, "model") || require(ds, "ds") || require(out_scores, "out_scores") ||
      require(out_len, "out_len"))
    return GDF_ERR_CONFIG;
  return guarded([&] {
    ScoreOptions opts;
    opts.criterion = model->ck.train.criterion;
    AnomalyScores scores = score_series(model->ck, ds->ds, opts);
    *out_len = scores.scores.size();
    *out_scores = new double[scores.scores.size()];
    std::memcpy(*out_scores, scores.scores.data(), scores.scores.size() * sizeof(double));
  });
}

void gdf_scores_free(double* scores) { delete[] scores; }

gdf_status gdf_evaluate(const gdf_config* cfg, const gdf_model* model,
                        const gdf_dataset* test, const gdf_dataset* calibration_or_null,
                        char** out_metrics_json) {
  if (require(cfg, "cfg") || require(model, "model") || require(test, "test") ||
      require(out_metrics_json, "out_metrics_json"))
    return GDF_ERR_CONFIG;
  return guarded([&] {
    const RunConfig& rc = cfg->cfg;
    EvalOptions opts;
    opts.delta = rc.scoring.delta;
    opts.calibration = rc.scoring.calibration;
    opts.criterion = rc.train.criterion;
    opts.scope = rc.scoring.scope;
    EvalResult res = evaluate(model->ck, test->ds,
                              calibration_or_null ? &calibration_or_null->ds : nullptr, opts);
    nlohmann::json j;
    j["precision"] = res.metrics.precision;
    j["recall"] = res.metrics.recall;
    j["f1"] = res.metrics.f1;
    j["precision_adj"] = res.metrics.precision_adj;
    j["recall_adj"] = res.metrics.recall_adj;
    j["f1_adj"] = res.metrics.f1_adj;
    j["threshold"] = res.detection.threshold;
    j["delta"] = rc.scoring.delta;
    j["has_metrics"] = res.has_metrics;
    *out_metrics_json = dup_string(j.dump(2));
  });
}

gdf_status gdf_run(const char* command, const gdf_config* cfg) {
  if (require(command, "command") || require(cfg, "cfg")) return GDF_ERR_CONFIG;
  return guarded([&] { run_command(command, cfg->cfg); });
}

}  // extern "C"
