#include "gdformer/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gdformer/container.hpp"
#include "gdformer/errors.hpp"
#include "gdformer/rng.hpp"

namespace gdformer {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

double parse_cell(const std::string& cell, const std::string& path, std::size_t line_no,
                  std::size_t col_no) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  double v = 0.0;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw DataError(path + " line " + std::to_string(line_no) + ": cell " +
                    std::to_string(col_no) + " is not numeric: '" + cell + "'");
  if (!std::isfinite(v))
    throw DataError(path + " line " + std::to_string(line_no) + ": non-finite value");
  return v;
}

}  // namespace

void TimeSeriesDataset::validate() const {
  if (values.size() != length * channels)
    throw DataError("dataset: value count does not match dimensions");
  if (!labels.empty() && labels.size() != length)
    throw DataError("dataset: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(length) + " timesteps");
  for (double v : values)
    if (!std::isfinite(v)) throw DataError("dataset: non-finite value");
}

TimeSeriesDataset load_csv(const std::string& path, bool has_header,
                           const std::string& label_path) {
  const auto lines = read_lines(path);
  std::size_t first = 0;
  TimeSeriesDataset ds;
  if (has_header) {
    if (lines.empty()) throw DataError(path + ": empty file");
    ds.channel_names = split_csv(lines[0]);
    first = 1;
  }
  if (lines.size() <= first) throw DataError(path + ": no data rows");

  ds.channels = split_csv(lines[first]).size();
  if (has_header && ds.channel_names.size() != ds.channels)
    throw DataError(path + ": header has " + std::to_string(ds.channel_names.size()) +
                    " columns but line " + std::to_string(first + 1) + " has " +
                    std::to_string(ds.channels));
  ds.length = lines.size() - first;
  ds.values.reserve(ds.length * ds.channels);
  for (std::size_t i = first; i < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    if (cells.size() != ds.channels)
      throw DataError(path + " line " + std::to_string(i + 1) + ": row has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(ds.channels));
    for (std::size_t c = 0; c < cells.size(); ++c)
      ds.values.push_back(parse_cell(cells[c], path, i + 1, c + 1));
  }

  if (!label_path.empty()) {
    const auto label_lines = read_lines(label_path);
    if (label_lines.size() != ds.length)
      throw DataError("labels " + label_path + " has " + std::to_string(label_lines.size()) +
                      " rows but " + path + " has " + std::to_string(ds.length));
    ds.labels.reserve(ds.length);
    for (std::size_t i = 0; i < label_lines.size(); ++i) {
      const std::string& cell = label_lines[i];
      if (cell == "0")
        ds.labels.push_back(0);
      else if (cell == "1")
        ds.labels.push_back(1);
      else {
        const double v = parse_cell(cell, label_path, i + 1, 1);
        if (v != 0.0 && v != 1.0)
          throw DataError(label_path + " line " + std::to_string(i + 1) +
                          ": label must be 0 or 1, got '" + cell + "'");
        ds.labels.push_back(v != 0.0 ? 1 : 0);
      }
    }
  }
  return ds;
}

void save_csv(const TimeSeriesDataset& ds, const std::string& path, bool write_header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  if (write_header) {
    for (std::size_t c = 0; c < ds.channels; ++c) {
      if (c) out << ',';
      if (c < ds.channel_names.size())
        out << ds.channel_names[c];
      else
        out << 'c' << c;
    }
    out << '\n';
  }
  char buf[64];
  for (std::size_t t = 0; t < ds.length; ++t) {
    for (std::size_t c = 0; c < ds.channels; ++c) {
      if (c) out << ',';
      std::snprintf(buf, sizeof buf, "%.17g", ds.at(t, c));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

void save_labels_csv(const TimeSeriesDataset& ds, const std::string& path) {
  if (!ds.has_labels()) throw DataError("dataset has no labels to save");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (int v : ds.labels) out << v << '\n';
  if (!out) throw DataError("write failed: " + path);
}

Tensor WindowSet::window_at(std::size_t i) const {
  const std::size_t n = window * channels;
  std::vector<double> chunk(data.begin() + static_cast<std::ptrdiff_t>(i * n),
                            data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  return Tensor::from({window, channels}, std::move(chunk));
}

namespace {

WindowSet slice_windows(const TimeSeriesDataset& ds, std::size_t window, bool cover_tail) {
  if (window < 1) throw ConfigError("window length must be >= 1");
  if (ds.length < window)
    throw DataError("empty window set: series length " + std::to_string(ds.length) +
                    " is shorter than window " + std::to_string(window));
  WindowSet ws;
  ws.window = window;
  ws.channels = ds.channels;
  const std::size_t b = ds.length / window;
  for (std::size_t i = 0; i < b; ++i) ws.offsets.push_back(i * window);
  if (cover_tail && b * window < ds.length) ws.offsets.push_back(ds.length - window);
  ws.data.reserve(ws.offsets.size() * window * ds.channels);
  for (std::size_t off : ws.offsets)
    ws.data.insert(ws.data.end(), ds.values.begin() + static_cast<std::ptrdiff_t>(off * ds.channels),
                   ds.values.begin() + static_cast<std::ptrdiff_t>((off + window) * ds.channels));
  return ws;
}

}  // namespace

WindowSet make_windows(const TimeSeriesDataset& ds, std::size_t window) {
  return slice_windows(ds, window, false);
}

WindowSet make_cover_windows(const TimeSeriesDataset& ds, std::size_t window) {
  return slice_windows(ds, window, true);
}

std::vector<std::uint8_t> draw_mask(std::size_t rows, std::size_t cols, const MaskSpec& spec) {
  if (spec.alpha < 0.0 || spec.alpha >= 1.0)
    throw ConfigError("mask ratio must be in [0, 1), got " + std::to_string(spec.alpha));
  std::vector<std::uint8_t> mask(rows * cols, 0);
  if (spec.alpha == 0.0) return mask;

  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    Rng rng(Rng::mix(spec.seed, attempt));
    std::fill(mask.begin(), mask.end(), 0);
    for (auto& m : mask) m = rng.bernoulli(spec.alpha) ? 1 : 0;

    bool ok = true;
    for (std::size_t r = 0; r < rows && ok; ++r) {
      bool all = true;
      for (std::size_t c = 0; c < cols; ++c)
        if (!mask[r * cols + c]) {
          all = false;
          break;
        }
      if (all) ok = false;
    }
    for (std::size_t c = 0; c < cols && ok; ++c) {
      bool all = true;
      for (std::size_t r = 0; r < rows; ++r)
        if (!mask[r * cols + c]) {
          all = false;
          break;
        }
      if (all) ok = false;
    }
    if (ok) return mask;
  }
  throw ConfigError("mask ratio " + std::to_string(spec.alpha) +
                    " rejected 1000 consecutive draws; lower the ratio");
}

MaskedWindow apply_mask(const Tensor& window, const MaskSpec& spec) {
  if (window.rank() != 2)
    throw DataError("apply_mask: expected a 2-d window, got " + shape_str(window.shape));
  MaskedWindow mw;
  mw.window = window.clone();
  mw.mask = draw_mask(window.rows(), window.cols(), spec);
  return mw;
}

TimeSeriesDataset generate_synthetic(const SynthSpec& spec) {
  if (spec.anomaly_rate < 0.0 || spec.anomaly_rate >= 1.0)
    throw ConfigError("anomaly rate must be in [0, 1), got " + std::to_string(spec.anomaly_rate));
  if (spec.point_fraction < 0.0 || spec.point_fraction > 1.0)
    throw ConfigError("point fraction must be in [0, 1]");
  if (spec.segment_min < 1 || spec.segment_max < spec.segment_min)
    throw ConfigError("segment length range is invalid");
  if (spec.channels < 1 || spec.length < 2) throw ConfigError("synthetic spec too small");

  Rng rng(spec.seed);
  const std::size_t d = spec.channels, len = spec.length;

  // Per-channel sinusoid banks; drawn when not supplied.
  std::vector<std::vector<double>> freqs = spec.freqs, amps = spec.amps, phases(d);
  if (freqs.empty()) {
    // periods of 10..50 steps, so ordinary window lengths cover full cycles
    freqs.resize(d);
    amps.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t k = 1 + static_cast<std::size_t>(rng.below(2));
      for (std::size_t j = 0; j < k; ++j) {
        freqs[c].push_back(rng.uniform(0.02, 0.1));
        amps[c].push_back(rng.uniform(0.8, 1.2));
        phases[c].push_back(rng.uniform(0.0, 2.0 * M_PI));
      }
    }
  } else {
    if (freqs.size() != d || amps.size() != d)
      throw ConfigError("freqs/amps must list every channel");
    for (std::size_t c = 0; c < d; ++c) phases[c].assign(freqs[c].size(), 0.0);
  }

  auto signal_at = [&](std::size_t c, double t, double freq_factor) {
    double v = 0.0;
    for (std::size_t j = 0; j < freqs[c].size(); ++j)
      v += amps[c][j] * std::sin(2.0 * M_PI * freqs[c][j] * freq_factor * t + phases[c][j]);
    return v;
  };

  std::vector<double> noise(len * d);
  for (auto& x : noise) x = spec.noise_sigma * rng.normal();

  TimeSeriesDataset ds;
  ds.length = len;
  ds.channels = d;
  ds.values.resize(len * d);
  ds.labels.assign(len, 0);
  for (std::size_t c = 0; c < d; ++c) ds.channel_names.push_back("c" + std::to_string(c));
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < d; ++c)
      ds.values[t * d + c] = signal_at(c, static_cast<double>(t), 1.0) + noise[t * d + c];

  const std::size_t target = static_cast<std::size_t>(std::llround(spec.anomaly_rate * len));
  if (target == 0) return ds;
  const double mag_base = std::max(spec.noise_sigma, 1e-3);
  std::size_t point_target = static_cast<std::size_t>(std::llround(spec.point_fraction * target));
  std::size_t seg_target = target - point_target;

  auto region_free = [&](std::size_t start, std::size_t n) {
    const std::size_t lo = start > 0 ? start - 1 : 0;
    const std::size_t hi = std::min(len, start + n + 1);
    for (std::size_t t = lo; t < hi; ++t)
      if (ds.labels[t]) return false;
    return true;
  };

  // Segment anomalies: level shift or frequency change over the drawn span.
  std::size_t placed = 0, attempts = 0;
  while (placed < seg_target) {
    if (++attempts > 100000)
      throw DataError("could not place segment anomalies; rate too high for series length");
    std::size_t n = spec.segment_min + rng.below(spec.segment_max - spec.segment_min + 1);
    if (seg_target - placed < n) n = std::max<std::size_t>(2, seg_target - placed);
    if (n + 2 >= len) n = std::max<std::size_t>(2, len / 4);
    const std::size_t start = rng.below(len - n);
    const bool level = rng.bernoulli(0.5);
    std::vector<double> channel_offsets(d, 0.0);
    std::vector<double> channel_factors(d, 1.0);
    if (level) {
      for (std::size_t c = 0; c < d; ++c) {
        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        channel_offsets[c] = sign * rng.uniform(5.0 * mag_base, 8.0 * mag_base);
      }
    } else {
      // independent per-channel factors, so the channels decohere instead
      // of replaying the same joint trajectory faster
      for (std::size_t c = 0; c < d; ++c)
        channel_factors[c] = rng.uniform(2.0, 4.0);
    }
    if (!region_free(start, n)) continue;
    for (std::size_t t = start; t < start + n; ++t) {
      ds.labels[t] = 1;
      for (std::size_t c = 0; c < d; ++c) {
        if (level)
          ds.values[t * d + c] += channel_offsets[c];
        else
          ds.values[t * d + c] =
              signal_at(c, static_cast<double>(t), channel_factors[c]) + noise[t * d + c];
      }
    }
    placed += n;
  }

  // Isolated point spikes.
  placed = 0;
  attempts = 0;
  while (placed < point_target) {
    if (++attempts > 100000)
      throw DataError("could not place point anomalies; rate too high for series length");
    const std::size_t t = rng.below(len);
    if (!region_free(t, 1)) continue;
    ds.labels[t] = 1;
    for (std::size_t c = 0; c < d; ++c) {
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      ds.values[t * d + c] += sign * rng.uniform(5.0 * mag_base, 8.0 * mag_base);
    }
    ++placed;
  }
  return ds;
}

void save_dataset_binary(const TimeSeriesDataset& ds, const std::string& path) {
  nlohmann::json meta;
  meta["kind"] = "dataset";
  meta["channel_names"] = ds.channel_names;
  Tensor values = Tensor::from({ds.length, ds.channels}, ds.values);
  std::vector<std::pair<std::string, const Tensor*>> tensors{{"values", &values}};
  Tensor labels;
  if (ds.has_labels()) {
    std::vector<double> lv(ds.labels.begin(), ds.labels.end());
    labels = Tensor::from({ds.length}, std::move(lv));
    tensors.emplace_back("labels", &labels);
  }
  write_container(path, meta, tensors);
}

TimeSeriesDataset load_dataset_binary(const std::string& path) {
  Container c = read_container(path);
  if (!c.tensors.contains("values"))
    throw CorruptManifestError("dataset container missing 'values': " + path);
  const Tensor& values = c.tensors.at("values");
  if (values.rank() != 2)
    throw ShapeMismatchError("dataset 'values' must be 2-d, got " + shape_str(values.shape));
  TimeSeriesDataset ds;
  ds.length = values.shape[0];
  ds.channels = values.shape[1];
  ds.values = *values.values;
  if (c.meta.contains("channel_names"))
    ds.channel_names = c.meta["channel_names"].get<std::vector<std::string>>();
  if (c.tensors.contains("labels")) {
    const Tensor& labels = c.tensors.at("labels");
    if (labels.numel() != ds.length)
      throw ShapeMismatchError("dataset labels length mismatch in " + path);
    ds.labels.reserve(ds.length);
    for (double v : *labels.values) ds.labels.push_back(v != 0.0 ? 1 : 0);
  }
  return ds;
}

TimeSeriesDataset head_fraction(const TimeSeriesDataset& ds, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw ConfigError("split fraction must be in (0, 1], got " + std::to_string(fraction));
  if (fraction == 1.0) return ds;
  TimeSeriesDataset out;
  out.length = static_cast<std::size_t>(fraction * static_cast<double>(ds.length));
  out.length = std::max<std::size_t>(out.length, 1);
  out.channels = ds.channels;
  out.values.assign(ds.values.begin(),
                    ds.values.begin() + static_cast<std::ptrdiff_t>(out.length * ds.channels));
  if (ds.has_labels())
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(out.length));
  out.channel_names = ds.channel_names;
  return out;
}

}  // namespace gdformer
