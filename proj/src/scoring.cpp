#include "gdformer/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "gdformer/errors.hpp"

namespace gdformer {

namespace {

std::vector<double> softmax_plain(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

double f1_of(double p, double r) {
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace

std::vector<double> window_statistic(const ForwardOutput& out, const Tensor& raw,
                                     const ModelConfig& cfg, Criterion criterion) {
  const std::size_t t = raw.rows();
  std::vector<double> stat(t, 0.0);
  if (criterion == Criterion::Sim) {
    for (std::size_t l : cfg.effective_similarity_layers()) {
      const Tensor& s = out.similarity.at(l - 1);
      for (std::size_t i = 0; i < t; ++i) stat[i] -= s.at(i);
    }
  } else {
    const Tensor& rec = out.reconstruction;
    for (std::size_t i = 0; i < t; ++i) {
      double err = 0.0;
      for (std::size_t c = 0; c < raw.cols(); ++c) {
        const double e = raw.at(i, c) - rec.at(i, c);
        err += e * e;
      }
      stat[i] = err;
    }
  }
  return stat;
}

std::vector<double> anomaly_score(const ForwardOutput& out, const ModelConfig& cfg) {
  std::vector<double> stat(cfg.window, 0.0);
  for (std::size_t l : cfg.effective_similarity_layers()) {
    const Tensor& s = out.similarity.at(l - 1);
    for (std::size_t i = 0; i < cfg.window; ++i) stat[i] -= s.at(i);
  }
  return softmax_plain(stat);
}

std::vector<double> assemble_series_scores(const std::vector<std::vector<double>>& per_window,
                                           const WindowSet& ws, std::size_t series_length) {
  if (per_window.size() != ws.count())
    throw DataError("assemble: " + std::to_string(per_window.size()) + " score vectors for " +
                    std::to_string(ws.count()) + " windows");
  std::vector<double> out(series_length, 0.0);
  std::vector<std::uint8_t> covered(series_length, 0);
  for (std::size_t w = 0; w < ws.count(); ++w) {
    if (per_window[w].size() != ws.window)
      throw DataError("assemble: window " + std::to_string(w) + " has " +
                      std::to_string(per_window[w].size()) + " scores, expected " +
                      std::to_string(ws.window));
    const std::size_t off = ws.offsets[w];
    for (std::size_t i = 0; i < ws.window; ++i) {
      if (covered[off + i]) continue;  // earlier window wins on overlap
      out[off + i] = per_window[w][i];
      covered[off + i] = 1;
    }
  }
  const std::size_t scored = ws.offsets.back() + ws.window;
  for (std::size_t i = 0; i < scored; ++i)
    if (!covered[i]) throw DataError("assemble: gap in coverage at position " + std::to_string(i));
  out.resize(scored);
  return out;
}

double threshold_from_quantile(const std::vector<double>& population, double delta_percent) {
  if (population.empty()) throw DataError("threshold: empty calibration population");
  if (delta_percent <= 0.0 || delta_percent > 100.0)
    throw ConfigError("delta must be in (0, 100], got " + std::to_string(delta_percent));
  const std::size_t n = population.size();
  std::size_t k = static_cast<std::size_t>(
      std::ceil(delta_percent / 100.0 * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n);
  std::vector<double> sorted = population;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end(), std::greater<double>());
  return sorted[k - 1];
}

std::vector<int> point_adjust(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    throw DataError("point_adjust: length mismatch " + std::to_string(pred.size()) + " vs " +
                    std::to_string(truth.size()));
  std::vector<int> adjusted = pred;
  const std::size_t n = pred.size();
  std::size_t i = 0;
  while (i < n) {
    if (!truth[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && truth[j]) ++j;
    bool hit = false;
    for (std::size_t k = i; k < j && !hit; ++k) hit = pred[k] != 0;
    if (hit)
      for (std::size_t k = i; k < j; ++k) adjusted[k] = 1;
    i = j;
  }
  return adjusted;
}

MetricsReport precision_recall_f1(const std::vector<int>& pred,
                                  const std::vector<int>& adjusted,
                                  const std::vector<int>& truth) {
  if (pred.size() != truth.size() || adjusted.size() != truth.size())
    throw DataError("metrics: prediction/truth length mismatch");
  MetricsReport m;
  auto tally = [&](const std::vector<int>& p, Counts& c) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (p[i] && truth[i]) ++c.tp;
      else if (p[i] && !truth[i]) ++c.fp;
      else if (!p[i] && truth[i]) ++c.fn;
    }
  };
  tally(pred, m.counts_raw);
  tally(adjusted, m.counts_adj);
  auto prf = [](const Counts& c, double& p, double& r, double& f) {
    p = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    r = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    f = f1_of(p, r);
  };
  prf(m.counts_raw, m.precision, m.recall, m.f1);
  prf(m.counts_adj, m.precision_adj, m.recall_adj, m.f1_adj);
  return m;
}

AnomalyScores score_series(const Checkpoint& ck, const TimeSeriesDataset& ds,
                           const ScoreOptions& opts) {
  NoGradGuard ng;
  const ModelConfig& cfg = ck.model;
  if (cfg.channels != ds.channels)
    throw ConfigError("checkpoint expects " + std::to_string(cfg.channels) +
                      " channels, dataset has " + std::to_string(ds.channels));
  const WindowSet ws = make_cover_windows(ds, cfg.window);
  std::vector<std::vector<double>> per_window(ws.count());
  for (std::size_t w = 0; w < ws.count(); ++w) {
    const Tensor window = ws.window_at(w);
    ForwardOutput out = model_forward(window, {}, ck.params, cfg);
    std::vector<double> stat = window_statistic(out, window, cfg, opts.criterion);
    per_window[w] = opts.scope == ScoreScope::Window ? softmax_plain(stat) : std::move(stat);
  }
  AnomalyScores scores;
  scores.window = ws.window;
  scores.offsets = ws.offsets;
  scores.scores = assemble_series_scores(per_window, ws, ds.length);
  if (opts.scope == ScoreScope::Series) scores.scores = softmax_plain(scores.scores);
  return scores;
}

EvalResult evaluate(const Checkpoint& ck, const TimeSeriesDataset& test,
                    const TimeSeriesDataset* calibration_train, const EvalOptions& opts) {
  EvalResult res;
  ScoreOptions sopts{opts.criterion, opts.scope};
  res.scores = score_series(ck, test, sopts);

  std::vector<double> population = res.scores.scores;
  if (opts.calibration == Calibration::Combined && calibration_train != nullptr) {
    const AnomalyScores train_scores = score_series(ck, *calibration_train, sopts);
    population.insert(population.end(), train_scores.scores.begin(), train_scores.scores.end());
  }
  res.detection.threshold = threshold_from_quantile(population, opts.delta);
  res.detection.raw.resize(res.scores.scores.size());
  for (std::size_t i = 0; i < res.scores.scores.size(); ++i)
    res.detection.raw[i] = res.scores.scores[i] >= res.detection.threshold ? 1 : 0;

  if (test.has_labels()) {
    std::vector<int> truth(test.labels.begin(),
                           test.labels.begin() + static_cast<std::ptrdiff_t>(res.scores.scores.size()));
    res.detection.adjusted = point_adjust(res.detection.raw, truth);
    res.metrics = precision_recall_f1(res.detection.raw, res.detection.adjusted, truth);
    res.has_metrics = true;
  } else {
    res.detection.adjusted = res.detection.raw;
  }
  return res;
}

void write_scores_csv(const std::string& path, const AnomalyScores& scores,
                      const DetectionResult& det, const std::vector<int>* truth) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "index,score,pred_raw,pred_adjusted";
  if (truth) out << ",truth";
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d,%d", i, scores.scores[i], det.raw[i],
                  det.adjusted[i]);
    out << buf;
    if (truth) out << ',' << (*truth)[i];
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

void write_metrics_json(const std::string& path, const EvalResult& result, double delta) {
  nlohmann::json j;
  j["precision"] = result.metrics.precision;
  j["recall"] = result.metrics.recall;
  j["f1"] = result.metrics.f1;
  j["precision_adj"] = result.metrics.precision_adj;
  j["recall_adj"] = result.metrics.recall_adj;
  j["f1_adj"] = result.metrics.f1_adj;
  j["threshold"] = result.detection.threshold;
  j["delta"] = delta;
  j["counts"] = {{"raw",
                  {{"tp", result.metrics.counts_raw.tp},
                   {"fp", result.metrics.counts_raw.fp},
                   {"fn", result.metrics.counts_raw.fn}}},
                 {"adjusted",
                  {{"tp", result.metrics.counts_adj.tp},
                   {"fp", result.metrics.counts_adj.fp},
                   {"fn", result.metrics.counts_adj.fn}}}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace gdformer
