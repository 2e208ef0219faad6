#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdformer/data.hpp"
#include "gdformer/model.hpp"
#include "gdformer/optim.hpp"

namespace gdformer {

enum class Criterion { Recon, Sim };

struct TrainConfig {
  double lambda = 1.0;  // loss trade-off, >= 0
  double lr = 1e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  Criterion criterion = Criterion::Sim;
  bool use_recon_loss = true;
  bool use_sim_loss = true;
  double grad_clip = 0.0;  // global-norm clip; 0 disables

  void validate() const;
};

struct LossBreakdown {
  Tensor total;       // taped scalar: L_c - lambda * L_s (disabled terms are 0)
  double recon = 0.0; // L_c
  double sim = 0.0;   // L_s
};

// L_c is the summed squared error against the raw window; L_s sums the
// layer/head-summed similarity over the configured layers and the window.
LossBreakdown compute_loss(const Tensor& x_raw, const ForwardOutput& out, double lambda,
                           const ModelConfig& mcfg, const TrainConfig& tcfg);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double recon = 0.0;     // mean per window
  double sim = 0.0;
  double total = 0.0;
};

// Serialized training state: parameters, both configs, progress, optimizer
// moments. Mask and shuffle streams derive from (seed, epoch, window), so
// the seed plus the epoch counter is the entire RNG state.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  Parameters params;
  AdamState optimizer;
  std::size_t epoch = 0;  // completed epochs
  std::vector<EpochLog> history;
  std::vector<std::string> frozen;  // parameter names excluded from updates
};

// Batched Adam over seeded-shuffled non-overlapped windows with a fresh
// mask per window per epoch. Deterministic given the seeds.
Checkpoint fit(const TimeSeriesDataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg);

// Continues a checkpoint to ck.train.epochs; bit-exact with an
// uninterrupted run.
void resume_fit(Checkpoint& ck, const TimeSeriesDataset& ds);

// Loads the source dictionary (Key/Value) and prototypes of every layer,
// freezes them, and trains the remaining parameters on the target dataset.
// The target channel count may differ; D, L, H, N, P must match.
Checkpoint transfer_fit(const Checkpoint& source, const TimeSeriesDataset& target,
                        ModelConfig target_cfg, const TrainConfig& tcfg);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

void write_loss_log(const std::string& path, const std::vector<EpochLog>& history);

}  // namespace gdformer
