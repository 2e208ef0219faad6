#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gdformer/tensor.hpp"

namespace gdformer {

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Raw multivariate series: `length` timesteps by `channels` columns,
// row-major, units as recorded. Labels, when present, are 0/1 per timestep.
struct TimeSeriesDataset {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::string> channel_names;

  bool has_labels() const { return !labels.empty(); }
  double at(std::size_t t, std::size_t c) const { return values[t * channels + c]; }
  double& at(std::size_t t, std::size_t c) { return values[t * channels + c]; }
  void validate() const;
};

// Contiguous windows of length T copied out of a series. Training windows
// are non-overlapped; a covering set may add one tail window aligned to the
// series end (its offset then increases by less than T).
struct WindowSet {
  std::size_t window = 0;  // T
  std::size_t channels = 0;
  std::vector<std::size_t> offsets;
  std::vector<double> data;  // [B x T x d]

  std::size_t count() const { return offsets.size(); }
  Tensor window_at(std::size_t i) const;
};

struct MaskSpec {
  double alpha = 0.05;  // per-entry masking probability, [0, 1)
  std::uint64_t seed = 0;
};

// Entry flags: true = masked. Value substitution happens after instance
// normalization, not here.
struct MaskedWindow {
  Tensor window;               // unchanged copy of the input
  std::vector<std::uint8_t> mask;  // T x d, row-major
};

struct SynthSpec {
  std::size_t channels = 5;
  std::size_t length = 20000;
  std::vector<std::vector<double>> freqs;  // per channel; empty -> drawn from seed
  std::vector<std::vector<double>> amps;
  double noise_sigma = 0.1;
  double anomaly_rate = 0.0;     // fraction of labeled points, [0, 1)
  double point_fraction = 0.5;   // share of anomalous points from isolated spikes
  std::size_t segment_min = 20;
  std::size_t segment_max = 50;
  std::uint64_t seed = 0;
};

// CSV: comma-separated, UTF-8, optional header row; rows are timesteps.
// Labels: single-column CSV of 0/1, one per timestep, no header.
TimeSeriesDataset load_csv(const std::string& path, bool has_header,
                           const std::string& label_path = "");
void save_csv(const TimeSeriesDataset& ds, const std::string& path, bool write_header = true);
void save_labels_csv(const TimeSeriesDataset& ds, const std::string& path);

// B = floor(length / T) non-overlapped windows; the trailing remainder is
// dropped. length < T is an error.
WindowSet make_windows(const TimeSeriesDataset& ds, std::size_t window);

// Same, plus one tail window at offset length - T when T does not divide
// length, so every point is covered for detection.
WindowSet make_cover_windows(const TimeSeriesDataset& ds, std::size_t window);

// Per-entry Bernoulli(alpha) mask, re-drawn with a fresh sub-seed until no
// timestep and no channel is fully masked. Gives up after 1000 attempts.
std::vector<std::uint8_t> draw_mask(std::size_t rows, std::size_t cols, const MaskSpec& spec);
MaskedWindow apply_mask(const Tensor& window, const MaskSpec& spec);

TimeSeriesDataset generate_synthetic(const SynthSpec& spec);

// Binary tensor container (same layout as checkpoints: manifest + payload).
void save_dataset_binary(const TimeSeriesDataset& ds, const std::string& path);
TimeSeriesDataset load_dataset_binary(const std::string& path);

// First floor(fraction * length) rows; fraction in (0, 1].
TimeSeriesDataset head_fraction(const TimeSeriesDataset& ds, double fraction);

}  // namespace gdformer
