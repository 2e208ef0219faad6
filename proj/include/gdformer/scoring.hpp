#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdformer/data.hpp"
#include "gdformer/model.hpp"
#include "gdformer/training.hpp"

namespace gdformer {

enum class Calibration { Test, Combined };
enum class ScoreScope { Window, Series };  // softmax domain

// Per-point scores in (0, 1). Under window scope each window's T scores
// sum to 1; the quantile threshold then makes windows comparable.
struct AnomalyScores {
  std::vector<double> scores;
  std::vector<std::size_t> offsets;  // window boundaries used for assembly
  std::size_t window = 0;
};

struct DetectionResult {
  double threshold = 0.0;
  std::vector<int> raw;       // 1 iff score >= threshold
  std::vector<int> adjusted;  // after point adjustment (raw copy without truth)
};

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct MetricsReport {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double precision_adj = 0.0, recall_adj = 0.0, f1_adj = 0.0;
  Counts counts_raw, counts_adj;
};

struct ScoreOptions {
  Criterion criterion = Criterion::Sim;
  ScoreScope scope = ScoreScope::Window;
};

struct EvalOptions {
  double delta = 1.0;  // top delta-percent flagged, (0, 100]
  Calibration calibration = Calibration::Combined;
  Criterion criterion = Criterion::Sim;
  ScoreScope scope = ScoreScope::Window;
};

struct EvalResult {
  AnomalyScores scores;
  DetectionResult detection;
  MetricsReport metrics;
  bool has_metrics = false;
};

// Softmax over the window positions of the negated layer/head-summed
// similarity (higher = more anomalous).
std::vector<double> anomaly_score(const ForwardOutput& out, const ModelConfig& cfg);

// Pre-softmax statistic per point: negated similarity sum, or the squared
// reconstruction error under the recon criterion.
std::vector<double> window_statistic(const ForwardOutput& out, const Tensor& raw,
                                     const ModelConfig& cfg, Criterion criterion);

// Concatenates per-window vectors by offset; on the tail overlap the
// earlier window wins. Coverage gaps are an error.
std::vector<double> assemble_series_scores(const std::vector<std::vector<double>>& per_window,
                                           const WindowSet& ws, std::size_t series_length);

// Smallest value such that ceil(delta% * n) calibration scores are >= it;
// ties flag every equal value.
double threshold_from_quantile(const std::vector<double>& population, double delta_percent);

std::vector<int> point_adjust(const std::vector<int>& pred, const std::vector<int>& truth);

MetricsReport precision_recall_f1(const std::vector<int>& pred,
                                  const std::vector<int>& adjusted,
                                  const std::vector<int>& truth);

// Forward every covering window of the series (no masking) and assemble
// per-point scores. Deterministic given the checkpoint.
AnomalyScores score_series(const Checkpoint& ck, const TimeSeriesDataset& ds,
                           const ScoreOptions& opts);

// Full pipeline: score, threshold over the chosen calibration population,
// raw + adjusted metrics when labels are present.
EvalResult evaluate(const Checkpoint& ck, const TimeSeriesDataset& test,
                    const TimeSeriesDataset* calibration_train, const EvalOptions& opts);

void write_scores_csv(const std::string& path, const AnomalyScores& scores,
                      const DetectionResult& det, const std::vector<int>* truth);
void write_metrics_json(const std::string& path, const EvalResult& result, double delta);

}  // namespace gdformer
