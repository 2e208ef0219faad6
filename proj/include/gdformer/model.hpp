#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdformer/tensor.hpp"

namespace gdformer {

enum class Activation { Relu, Gelu };
enum class AttentionMode { Dictionary, Self };
enum class SimilarityMetric { Dot, Kl, Js };

struct ModelConfig {
  std::size_t window = 100;      // T
  std::size_t channels = 0;      // d
  std::size_t embed_dim = 512;   // D
  std::size_t layers = 3;        // L
  std::size_t heads = 8;         // H
  std::size_t dict_size = 16;    // N
  std::size_t prototypes = 12;   // P
  double mask_ratio = 0.05;
  std::size_t ffn_dim = 0;  // 0 -> 4 * embed_dim
  Activation activation = Activation::Gelu;
  AttentionMode attention = AttentionMode::Dictionary;
  SimilarityMetric metric = SimilarityMetric::Dot;
  std::vector<std::size_t> similarity_layers;  // 1-based; empty -> all

  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t hidden_dim() const { return ffn_dim ? ffn_dim : 4 * embed_dim; }
  std::vector<std::size_t> effective_similarity_layers() const;
  void validate() const;
};

// Learnable state of one encoder layer. In dictionary mode dict_k/dict_v
// are the [N x D] global dictionary and prototypes is [P x N]; heads are
// served by slicing columns, with no extra projections. In self mode the
// layer carries w_k/w_v instead and prototypes is [P x T].
struct LayerParams {
  Tensor w_q;                   // [D x D]
  Tensor w_k, w_v;              // self mode, [D x D]
  Tensor dict_k, dict_v;        // dictionary mode, [N x D]
  Tensor prototypes;            // [P x N] or [P x T]
  Tensor ln1_gain, ln1_bias;    // [D]
  Tensor ln2_gain, ln2_bias;    // [D]
  Tensor ffn_w1, ffn_b1;        // [D x F], [F]
  Tensor ffn_w2, ffn_b2;        // [F x D], [D]
};

struct Parameters {
  Tensor embed_w, embed_b;  // [d x D], [D]
  std::vector<LayerParams> layers;
  Tensor proj_w, proj_b;  // [D x d], [d]

  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::vector<Tensor*> all();
  std::vector<Tensor*> trainable();  // requires_grad only
};

// Per-channel normalization statistics of one window, computed over the
// unmasked entries only. std is the population standard deviation.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

constexpr double kNormEps = 1e-5;

struct NormalizedWindow {
  Tensor values;  // masked entries zeroed
  NormStats stats;
};

struct ForwardOutput {
  Tensor reconstruction;           // [T x d], raw units
  std::vector<Tensor> similarity;  // per layer, [T], head-summed
  // Populated when keep_maps is requested: attention maps and head-level
  // similarities for every layer and head.
  std::vector<std::vector<Tensor>> maps;      // [L][H], [T x N] (or [T x T])
  std::vector<std::vector<Tensor>> head_sim;  // [L][H], [T x P]
  NormStats stats;
};

struct AttentionResult {
  Tensor fused;             // [T x D], head concat, no output projection
  Tensor similarity;        // [T], summed over prototypes and heads
  std::vector<Tensor> maps;      // per head, row-stochastic
  std::vector<Tensor> head_sim;  // per head, [T x P]
};

NormalizedWindow instance_normalize(const Tensor& window,
                                    const std::vector<std::uint8_t>& mask);
Tensor denormalize(const Tensor& normalized, const NormStats& stats);

Tensor embed(const Tensor& normalized, const Parameters& params);

// Row-wise similarity between a stochastic map and softmax-normalized
// prototypes. Dot is the plain inner product; kl/js are negated
// divergences so that larger still means more similar.
Tensor similarity_scores(const Tensor& map, const Tensor& proto_norm, SimilarityMetric metric);

AttentionResult dictionary_cross_attention(const Tensor& x_prev, const LayerParams& layer,
                                           const ModelConfig& cfg);
AttentionResult self_attention(const Tensor& x_prev, const LayerParams& layer,
                               const ModelConfig& cfg);

struct LayerForward {
  Tensor x_next;
  AttentionResult attention;
};
LayerForward encoder_layer_forward(const Tensor& x_prev, const LayerParams& layer,
                                   const ModelConfig& cfg);

ForwardOutput model_forward(const Tensor& window, const std::vector<std::uint8_t>& mask,
                            const Parameters& params, const ModelConfig& cfg,
                            bool keep_maps = false);

Parameters init_parameters(const ModelConfig& cfg, std::uint64_t seed);

// Learnable scalars in one attention block: query projection(s) plus, in
// dictionary mode, the Key/Value dictionary and prototypes.
std::size_t attention_block_param_count(const ModelConfig& cfg);
std::size_t attention_block_param_formula(const ModelConfig& cfg);

}  // namespace gdformer
