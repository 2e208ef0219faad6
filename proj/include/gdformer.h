/* C API for the gdformer library: opaque handles, status codes, and a
 * thread-local error message. Every function returning gdf_status yields
 * GDF_OK on success; on failure gdf_last_error() describes the cause.
 * Objects returned through out-parameters are owned by the caller and
 * released with the matching _free function. */

#ifndef GDFORMER_H
#define GDFORMER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gdf_status {
  GDF_OK = 0,
  GDF_ERR_CONFIG = 1, /* invalid configuration or usage */
  GDF_ERR_RUNTIME = 2 /* I/O, numerical or other runtime failure */
} gdf_status;

typedef struct gdf_config gdf_config;
typedef struct gdf_dataset gdf_dataset;
typedef struct gdf_model gdf_model; /* a trained checkpoint */

const char* gdf_version(void);
const char* gdf_last_error(void);

void gdf_string_free(char* s);

/* ---- configuration ---- */

gdf_status gdf_config_create(gdf_config** out);
gdf_status gdf_config_load_file(const char* path, gdf_config** out);
gdf_status gdf_config_load_json(const char* json_text, gdf_config** out);
gdf_status gdf_config_apply_preset(gdf_config* cfg, const char* preset);
/* Merges a partial config file into an existing config. */
gdf_status gdf_config_merge_file(gdf_config* cfg, const char* path);
/* key_path is dotted ("scoring.delta"); value is parsed as JSON, with a
 * fallback to a bare string. */
gdf_status gdf_config_override(gdf_config* cfg, const char* key_path, const char* value);
gdf_status gdf_config_to_json(const gdf_config* cfg, char** out_json);
void gdf_config_free(gdf_config* cfg);

/* ---- datasets ---- */

gdf_status gdf_dataset_load_csv(const char* csv_path, int has_header,
                                const char* labels_path_or_null, gdf_dataset** out);
/* with_anomalies = 0 uses the config's train_anomaly_rate stream. */
gdf_status gdf_dataset_synthesize(const gdf_config* cfg, int with_anomalies,
                                  gdf_dataset** out);
uint64_t gdf_dataset_length(const gdf_dataset* ds);
uint64_t gdf_dataset_channels(const gdf_dataset* ds);
void gdf_dataset_free(gdf_dataset* ds);

/* ---- training and scoring ---- */

gdf_status gdf_train(const gdf_config* cfg, const gdf_dataset* train, gdf_model** out);
gdf_status gdf_transfer_train(const gdf_config* cfg, const gdf_model* source,
                              const gdf_dataset* target, gdf_model** out);
gdf_status gdf_model_save(const gdf_model* model, const char* path);
gdf_status gdf_model_load(const char* path, gdf_model** out);
void gdf_model_free(gdf_model* model);

/* Per-point anomaly scores for the whole series; *out_scores is allocated
 * by the library and released with gdf_scores_free. */
gdf_status gdf_score(const gdf_model* model, const gdf_dataset* ds, double** out_scores,
                     uint64_t* out_len);
void gdf_scores_free(double* scores);

/* Threshold + metrics as a JSON document (see README for the keys).
 * calibration_or_null supplies the extra population for the "combined"
 * calibration mode. */
gdf_status gdf_evaluate(const gdf_config* cfg, const gdf_model* model,
                        const gdf_dataset* test, const gdf_dataset* calibration_or_null,
                        char** out_metrics_json);

/* ---- commands ---- */

/* Runs a full CLI command (synth, train, detect, evaluate, transfer,
 * ablate, bench, gradcheck) with artifacts written under the config's
 * output directory. */
gdf_status gdf_run(const char* command, const gdf_config* cfg);

#ifdef __cplusplus
}
#endif

#endif /* GDFORMER_H */
