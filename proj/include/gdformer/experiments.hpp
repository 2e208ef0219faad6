#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdformer/run_config.hpp"

namespace gdformer {

// synth, train, detect, evaluate, transfer, ablate, bench, gradcheck.
std::vector<std::string> command_names();

// Runs one command end to end: creates the output directory, echoes the
// resolved config, writes the command's artifacts. On failure every file
// written by this invocation is removed before the error propagates.
void run_command(const std::string& command, const RunConfig& cfg);

// Seconds per forward pass of one attention block at window length t,
// measured over enough iterations to be stable. Used by `bench`.
double time_attention_block(const ModelConfig& cfg, AttentionMode mode, std::size_t t);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<std::pair<std::string, double>> per_tensor;
};

// Full-model finite-difference gradient check on a fixed random window
// with a fixed mask, perturbing every trainable parameter.
GradCheckReport model_gradient_check(const ModelConfig& mcfg, const TrainConfig& tcfg,
                                     std::uint64_t seed, double h);

}  // namespace gdformer
