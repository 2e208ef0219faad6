#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gdformer/errors.hpp"
#include "gdformer/rng.hpp"
#include "gdformer/scoring.hpp"

using namespace gdformer;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.window = 10;
  cfg.channels = 2;
  cfg.embed_dim = 8;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.dict_size = 3;
  cfg.prototypes = 2;
  return cfg;
}

ForwardOutput fake_output(const std::vector<double>& sim_totals) {
  ForwardOutput out;
  out.similarity.push_back(Tensor::from({sim_totals.size()}, sim_totals));
  out.reconstruction = Tensor::zeros({sim_totals.size(), 1});
  return out;
}

Checkpoint tiny_checkpoint(std::uint64_t seed, std::size_t epochs = 2) {
  SynthSpec spec;
  spec.channels = 2;
  spec.length = 400;
  spec.anomaly_rate = 0.0;
  spec.seed = seed;
  TimeSeriesDataset ds = generate_synthetic(spec);
  ModelConfig mcfg = tiny_model();
  TrainConfig tcfg;
  tcfg.epochs = epochs;
  tcfg.batch_size = 8;
  tcfg.lr = 1e-3;
  tcfg.seed = seed;
  return fit(ds, mcfg, tcfg);
}

}  // namespace

TEST_CASE("equal similarity totals give uniform scores") {
  ModelConfig cfg = tiny_model();
  ForwardOutput out = fake_output(std::vector<double>(cfg.window, 0.7));
  const auto scores = anomaly_score(out, cfg);
  for (double s : scores) CHECK(s == doctest::Approx(1.0 / cfg.window).epsilon(1e-12));
}

TEST_CASE("two-point analytic softmax") {
  ModelConfig cfg = tiny_model();
  cfg.window = 2;
  ForwardOutput out = fake_output({0.0, std::log(3.0)});
  const auto scores = anomaly_score(out, cfg);
  CHECK(scores[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(scores[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("lowering a point's similarity raises its score and no other") {
  ModelConfig cfg = tiny_model();
  std::vector<double> totals{0.5, 0.8, 0.3, 0.9, 0.6, 0.2, 0.7, 0.4, 0.55, 0.65};
  const auto base = anomaly_score(fake_output(totals), cfg);
  std::vector<double> bumped = totals;
  bumped[3] -= 0.5;
  const auto changed = anomaly_score(fake_output(bumped), cfg);
  CHECK(changed[3] > base[3]);
  for (std::size_t i = 0; i < totals.size(); ++i)
    if (i != 3) CHECK(changed[i] <= base[i]);
}

TEST_CASE("per-window scores sum to one") {
  Rng rng(3);
  ModelConfig cfg = tiny_model();
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> totals(cfg.window);
    for (auto& v : totals) v = rng.uniform(0.0, 2.0);
    const auto scores = anomaly_score(fake_output(totals), cfg);
    double sum = 0.0;
    for (double s : scores) sum += s;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("assembly concatenates disjoint windows") {
  WindowSet ws;
  ws.window = 3;
  ws.channels = 1;
  ws.offsets = {0, 3};
  std::vector<std::vector<double>> per{{1, 2, 3}, {4, 5, 6}};
  const auto out = assemble_series_scores(per, ws, 6);
  CHECK(out == std::vector<double>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("tail overlap: earlier scores win") {
  // length 150, window 100, tail at offset 50
  WindowSet ws;
  ws.window = 100;
  ws.channels = 1;
  ws.offsets = {0, 50};
  std::vector<std::vector<double>> per{std::vector<double>(100, 1.0),
                                       std::vector<double>(100, 2.0)};
  const auto out = assemble_series_scores(per, ws, 150);
  REQUIRE(out.size() == 150);
  for (std::size_t i = 0; i < 100; ++i) CHECK(out[i] == 1.0);
  for (std::size_t i = 100; i < 150; ++i) CHECK(out[i] == 2.0);
}

TEST_CASE("assembled length covers the whole series") {
  for (std::size_t len : {100u, 101u, 150u, 199u, 200u, 257u}) {
    TimeSeriesDataset ds;
    ds.length = len;
    ds.channels = 1;
    ds.values.assign(len, 0.0);
    WindowSet ws = make_cover_windows(ds, 100);
    std::vector<std::vector<double>> per(ws.count(), std::vector<double>(100, 0.5));
    CHECK(assemble_series_scores(per, ws, len).size() == len);
  }
}

TEST_CASE("threshold flags exactly the top delta percent") {
  std::vector<double> ten;
  for (int i = 1; i <= 10; ++i) ten.push_back(i * 0.1);
  const double thr = threshold_from_quantile(ten, 10.0);
  CHECK(thr == doctest::Approx(1.0));
  std::size_t flagged = 0;
  for (double s : ten) flagged += s >= thr ? 1 : 0;
  CHECK(flagged == 1);

  std::vector<double> equal(25, 0.5);
  const double thr_eq = threshold_from_quantile(equal, 7.0);
  for (double s : equal) CHECK(s >= thr_eq);

  CHECK_THROWS_AS(threshold_from_quantile({}, 10.0), DataError);
  CHECK_THROWS_AS(threshold_from_quantile(ten, 0.0), ConfigError);
  CHECK_THROWS_AS(threshold_from_quantile(ten, 150.0), ConfigError);
}

TEST_CASE("threshold against a sort oracle on 1000 random scores") {
  Rng rng(8);
  std::vector<double> scores(1000);
  for (auto& s : scores) s = rng.uniform();
  const double thr = threshold_from_quantile(scores, 5.0);
  std::size_t flagged = 0, ties = 0;
  for (double s : scores) {
    flagged += s >= thr ? 1 : 0;
    ties += s == thr ? 1 : 0;
  }
  CHECK(flagged >= 50);
  CHECK(flagged <= 50 + ties);

  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  CHECK(thr == sorted[49]);
}

TEST_CASE("threshold monotonicity: larger delta never unflags") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> scores(200);
    for (auto& s : scores) s = rng.uniform();
    const double d1 = rng.uniform(1.0, 50.0);
    const double d2 = d1 + rng.uniform(0.0, 49.0);
    const double t1 = threshold_from_quantile(scores, d1);
    const double t2 = threshold_from_quantile(scores, d2);
    for (double s : scores)
      if (s >= t1) CHECK(s >= t2);
  }
}

TEST_CASE("point adjustment marks whole hit segments") {
  CHECK(point_adjust({0, 0, 1, 0}, {0, 1, 1, 0}) == std::vector<int>{0, 1, 1, 0});
  CHECK(point_adjust({0, 0, 0, 0}, {0, 1, 1, 0}) == std::vector<int>{0, 0, 0, 0});
  CHECK(point_adjust({1, 0, 1, 0}, {0, 0, 0, 0}) == std::vector<int>{1, 0, 1, 0});
  CHECK_THROWS_AS(point_adjust({1, 0}, {1}), DataError);
}

TEST_CASE("exact predictions give perfect metrics") {
  const std::vector<int> truth{0, 1, 1, 0, 1};
  MetricsReport m = precision_recall_f1(truth, truth, truth);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
}

TEST_CASE("hand-counted metrics") {
  const std::vector<int> truth{1, 0, 1, 0};
  const std::vector<int> pred{1, 1, 0, 0};
  MetricsReport m = precision_recall_f1(pred, pred, truth);
  CHECK(m.precision == doctest::Approx(0.5));
  CHECK(m.recall == doctest::Approx(0.5));
  CHECK(m.f1 == doctest::Approx(0.5));
  CHECK(m.counts_raw.tp == 1);
  CHECK(m.counts_raw.fp == 1);
  CHECK(m.counts_raw.fn == 1);
}

TEST_CASE("metrics agree with a brute confusion count on 100 random pairs") {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> truth(50), pred(50);
    for (auto& v : truth) v = rng.bernoulli(0.3) ? 1 : 0;
    for (auto& v : pred) v = rng.bernoulli(0.4) ? 1 : 0;
    MetricsReport m = precision_recall_f1(pred, pred, truth);

    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      tp += (pred[i] == 1 && truth[i] == 1) ? 1 : 0;
      fp += (pred[i] == 1 && truth[i] == 0) ? 1 : 0;
      fn += (pred[i] == 0 && truth[i] == 1) ? 1 : 0;
    }
    const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    CHECK(m.precision == doctest::Approx(p).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(r).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(f).epsilon(1e-12));
  }
}

TEST_CASE("adjusted F1 never falls below raw F1") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> truth(80, 0), pred(80, 0);
    // random ground-truth segments
    std::size_t i = 5;
    while (i < 70) {
      const std::size_t len = 1 + rng.below(6);
      if (rng.bernoulli(0.4))
        for (std::size_t k = i; k < std::min<std::size_t>(80, i + len); ++k) truth[k] = 1;
      i += len + 1 + rng.below(5);
    }
    for (auto& v : pred) v = rng.bernoulli(0.2) ? 1 : 0;
    const std::vector<int> adjusted = point_adjust(pred, truth);
    MetricsReport m = precision_recall_f1(pred, adjusted, truth);
    CHECK(m.f1_adj >= m.f1 - 1e-12);
  }
}

TEST_CASE("scoring a series is deterministic and normalized per window") {
  Checkpoint ck = tiny_checkpoint(21);
  SynthSpec spec;
  spec.channels = 2;
  spec.length = 235;
  spec.anomaly_rate = 0.04;
  spec.seed = 22;
  TimeSeriesDataset ds = generate_synthetic(spec);

  ScoreOptions opts;
  AnomalyScores a = score_series(ck, ds, opts);
  AnomalyScores b = score_series(ck, ds, opts);
  CHECK(a.scores == b.scores);
  REQUIRE(a.scores.size() == ds.length);
  for (double s : a.scores) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  // non-overlapped prefix windows each sum to one
  for (std::size_t w = 0; w + 1 < a.offsets.size(); ++w) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.window; ++i) sum += a.scores[a.offsets[w] + i];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("delta of 100 flags everything: recall 1, precision = anomaly rate") {
  Checkpoint ck = tiny_checkpoint(23);
  SynthSpec spec;
  spec.channels = 2;
  spec.length = 300;
  spec.anomaly_rate = 0.05;
  spec.seed = 24;
  TimeSeriesDataset ds = generate_synthetic(spec);

  EvalOptions opts;
  opts.delta = 100.0;
  opts.calibration = Calibration::Test;
  EvalResult res = evaluate(ck, ds, nullptr, opts);
  REQUIRE(res.has_metrics);
  CHECK(res.metrics.recall_adj == doctest::Approx(1.0));
  std::size_t positives = 0;
  for (int l : ds.labels) positives += l;
  const double rate = static_cast<double>(positives) / static_cast<double>(ds.length);
  CHECK(res.metrics.precision == doctest::Approx(rate).epsilon(1e-12));
}

TEST_CASE("combined calibration pools train and test scores") {
  Checkpoint ck = tiny_checkpoint(25);
  SynthSpec spec;
  spec.channels = 2;
  spec.length = 300;
  spec.anomaly_rate = 0.05;
  spec.seed = 26;
  TimeSeriesDataset test = generate_synthetic(spec);
  spec.anomaly_rate = 0.0;
  spec.seed = 27;
  TimeSeriesDataset train = generate_synthetic(spec);

  EvalOptions combined;
  combined.delta = 10.0;
  combined.calibration = Calibration::Combined;
  EvalOptions test_only = combined;
  test_only.calibration = Calibration::Test;
  EvalResult with_train = evaluate(ck, test, &train, combined);
  EvalResult without = evaluate(ck, test, nullptr, test_only);
  CHECK(with_train.detection.threshold != without.detection.threshold);
}
