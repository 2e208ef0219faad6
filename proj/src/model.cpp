#include "gdformer/model.hpp"

#include <algorithm>
#include <cmath>

#include "gdformer/errors.hpp"
#include "gdformer/rng.hpp"

namespace gdformer {

std::vector<std::size_t> ModelConfig::effective_similarity_layers() const {
  if (!similarity_layers.empty()) return similarity_layers;
  std::vector<std::size_t> all(layers);
  for (std::size_t i = 0; i < layers; ++i) all[i] = i + 1;
  return all;
}

void ModelConfig::validate() const {
  if (window < 2) throw ConfigError("model.window must be >= 2, got " + std::to_string(window));
  if (channels < 1) throw ConfigError("model.channels must be >= 1");
  if (heads < 1) throw ConfigError("model.heads must be >= 1");
  if (embed_dim == 0 || embed_dim % heads != 0)
    throw ConfigError("model.embed_dim " + std::to_string(embed_dim) +
                      " is not divisible by model.heads " + std::to_string(heads));
  if (layers < 1) throw ConfigError("model.layers must be >= 1");
  if (dict_size < 1) throw ConfigError("model.dict_size must be >= 1");
  if (prototypes < 1) throw ConfigError("model.prototypes must be >= 1");
  if (mask_ratio < 0.0 || mask_ratio >= 1.0)
    throw ConfigError("model.mask_ratio must be in [0, 1), got " + std::to_string(mask_ratio));
  std::vector<std::size_t> sl = similarity_layers;
  std::sort(sl.begin(), sl.end());
  for (std::size_t i = 0; i < sl.size(); ++i) {
    if (sl[i] < 1 || sl[i] > layers)
      throw ConfigError("model.similarity_layers entry " + std::to_string(sl[i]) +
                        " outside 1.." + std::to_string(layers));
    if (i > 0 && sl[i] == sl[i - 1])
      throw ConfigError("model.similarity_layers has duplicate entry " + std::to_string(sl[i]));
  }
}

// ------------------------------------------------------------- parameters

std::vector<std::pair<std::string, Tensor*>> Parameters::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embed.w", &embed_w);
  out.emplace_back("embed.b", &embed_b);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerParams& lp = layers[l];
    out.emplace_back(p + "w_q", &lp.w_q);
    if (lp.w_k.values) out.emplace_back(p + "w_k", &lp.w_k);
    if (lp.w_v.values) out.emplace_back(p + "w_v", &lp.w_v);
    if (lp.dict_k.values) out.emplace_back(p + "dict_k", &lp.dict_k);
    if (lp.dict_v.values) out.emplace_back(p + "dict_v", &lp.dict_v);
    out.emplace_back(p + "prototypes", &lp.prototypes);
    out.emplace_back(p + "ln1.gain", &lp.ln1_gain);
    out.emplace_back(p + "ln1.bias", &lp.ln1_bias);
    out.emplace_back(p + "ln2.gain", &lp.ln2_gain);
    out.emplace_back(p + "ln2.bias", &lp.ln2_bias);
    out.emplace_back(p + "ffn.w1", &lp.ffn_w1);
    out.emplace_back(p + "ffn.b1", &lp.ffn_b1);
    out.emplace_back(p + "ffn.w2", &lp.ffn_w2);
    out.emplace_back(p + "ffn.b2", &lp.ffn_b2);
  }
  out.emplace_back("proj.w", &proj_w);
  out.emplace_back("proj.b", &proj_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Parameters::named() const {
  auto mut = const_cast<Parameters*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [n, t] : mut) out.emplace_back(n, t);
  return out;
}

std::vector<Tensor*> Parameters::all() {
  std::vector<Tensor*> out;
  for (auto& [n, t] : named()) out.push_back(t);
  return out;
}

std::vector<Tensor*> Parameters::trainable() {
  std::vector<Tensor*> out;
  for (auto& [n, t] : named())
    if (t->requires_grad) out.push_back(t);
  return out;
}

// ---------------------------------------------------------- normalization

NormalizedWindow instance_normalize(const Tensor& window,
                                    const std::vector<std::uint8_t>& mask) {
  if (window.rank() != 2)
    throw TensorError("instance_normalize: expected [T x d], got " + shape_str(window.shape));
  const std::size_t t = window.rows(), d = window.cols();
  if (t < 2) throw TensorError("instance_normalize: window length must be >= 2");
  if (!mask.empty() && mask.size() != t * d)
    throw TensorError("instance_normalize: mask size does not match window");

  NormalizedWindow out;
  out.stats.mean.assign(d, 0.0);
  out.stats.std.assign(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < t; ++i) {
      if (!mask.empty() && mask[i * d + c]) continue;
      sum += window.at(i, c);
      ++count;
    }
    if (count == 0)
      throw TensorError("instance_normalize: channel " + std::to_string(c) + " fully masked");
    const double mu = sum / static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      if (!mask.empty() && mask[i * d + c]) continue;
      const double x = window.at(i, c) - mu;
      var += x * x;
    }
    var /= static_cast<double>(count);
    out.stats.mean[c] = mu;
    out.stats.std[c] = std::sqrt(var);
  }

  out.values = Tensor::zeros({t, d});
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      if (!mask.empty() && mask[i * d + c]) continue;  // masked entries stay zero
      out.values.at(i, c) =
          (window.at(i, c) - out.stats.mean[c]) / (out.stats.std[c] + kNormEps);
    }
  return out;
}

Tensor denormalize(const Tensor& normalized, const NormStats& stats) {
  const std::size_t d = normalized.cols();
  if (stats.mean.size() != d || stats.std.size() != d)
    throw TensorError("denormalize: stats do not match " + shape_str(normalized.shape));
  std::vector<double> sc(d), mu(d);
  for (std::size_t c = 0; c < d; ++c) {
    sc[c] = stats.std[c] + kNormEps;
    mu[c] = stats.mean[c];
  }
  return add_rowvec(mul_rowvec(normalized, Tensor::from({d}, std::move(sc))),
                    Tensor::from({d}, std::move(mu)));
}

Tensor embed(const Tensor& normalized, const Parameters& params) {
  return add_rowvec(matmul(normalized, params.embed_w), params.embed_b);
}

// -------------------------------------------------------------- attention

Tensor similarity_scores(const Tensor& map, const Tensor& proto_norm, SimilarityMetric metric) {
  switch (metric) {
    case SimilarityMetric::Dot:
      return matmul(map, transpose(proto_norm));
    case SimilarityMetric::Kl:
      return neg_kl_scores(map, proto_norm);
    case SimilarityMetric::Js:
      return neg_js_scores(map, proto_norm);
  }
  throw TensorError("similarity_scores: unknown metric");
}

namespace {

AttentionResult attention_common(const Tensor& q_full, const Tensor& keys, const Tensor& vals,
                                 const LayerParams& layer, const ModelConfig& cfg) {
  const std::size_t h = cfg.heads, dh = cfg.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor proto_norm = softmax(layer.prototypes, 1);

  AttentionResult res;
  std::vector<Tensor> fused_parts;
  Tensor sim_total;
  for (std::size_t i = 0; i < h; ++i) {
    const std::size_t c0 = i * dh, c1 = (i + 1) * dh;
    Tensor q = slice_cols(q_full, c0, c1);
    Tensor k = slice_cols(keys, c0, c1);
    Tensor v = slice_cols(vals, c0, c1);
    Tensor map = softmax(scale(matmul(q, transpose(k)), inv_sqrt_dh), 1);
    fused_parts.push_back(matmul(map, v));
    Tensor head_s = similarity_scores(map, proto_norm, cfg.metric);
    Tensor head_sim = sum_axis(head_s, 1);
    sim_total = i == 0 ? head_sim : add(sim_total, head_sim);
    res.maps.push_back(std::move(map));
    res.head_sim.push_back(std::move(head_s));
  }
  res.fused = concat_cols(fused_parts);
  res.similarity = std::move(sim_total);
  return res;
}

}  // namespace

AttentionResult dictionary_cross_attention(const Tensor& x_prev, const LayerParams& layer,
                                           const ModelConfig& cfg) {
  Tensor q_full = matmul(x_prev, layer.w_q);
  return attention_common(q_full, layer.dict_k, layer.dict_v, layer, cfg);
}

AttentionResult self_attention(const Tensor& x_prev, const LayerParams& layer,
                               const ModelConfig& cfg) {
  Tensor q_full = matmul(x_prev, layer.w_q);
  Tensor k_full = matmul(x_prev, layer.w_k);
  Tensor v_full = matmul(x_prev, layer.w_v);
  return attention_common(q_full, k_full, v_full, layer, cfg);
}

LayerForward encoder_layer_forward(const Tensor& x_prev, const LayerParams& layer,
                                   const ModelConfig& cfg) {
  LayerForward out;
  out.attention = cfg.attention == AttentionMode::Dictionary
                      ? dictionary_cross_attention(x_prev, layer, cfg)
                      : self_attention(x_prev, layer, cfg);
  Tensor u = layer_norm(add(x_prev, out.attention.fused), layer.ln1_gain, layer.ln1_bias,
                        kNormEps);
  Tensor hidden = add_rowvec(matmul(u, layer.ffn_w1), layer.ffn_b1);
  hidden = cfg.activation == Activation::Gelu ? gelu(hidden) : relu(hidden);
  Tensor ffn = add_rowvec(matmul(hidden, layer.ffn_w2), layer.ffn_b2);
  out.x_next = layer_norm(add(u, ffn), layer.ln2_gain, layer.ln2_bias, kNormEps);
  return out;
}

ForwardOutput model_forward(const Tensor& window, const std::vector<std::uint8_t>& mask,
                            const Parameters& params, const ModelConfig& cfg,
                            bool keep_maps) {
  if (window.rank() != 2 || window.rows() != cfg.window || window.cols() != cfg.channels)
    throw TensorError("model_forward: window " + shape_str(window.shape) +
                      " does not match config [" + std::to_string(cfg.window) + "x" +
                      std::to_string(cfg.channels) + "]");
  ForwardOutput out;
  NormalizedWindow norm = instance_normalize(window, mask);
  out.stats = norm.stats;

  Tensor x = embed(norm.values, params);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerForward lf = encoder_layer_forward(x, params.layers[l], cfg);
    x = lf.x_next;
    out.similarity.push_back(std::move(lf.attention.similarity));
    if (keep_maps) {
      out.maps.push_back(std::move(lf.attention.maps));
      out.head_sim.push_back(std::move(lf.attention.head_sim));
    }
  }
  Tensor recon_norm = add_rowvec(matmul(x, params.proj_w), params.proj_b);
  out.reconstruction = denormalize(recon_norm, norm.stats);
  return out;
}

// ---------------------------------------------------------------- init

namespace {

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (auto& v : *t.values) v = rng.uniform(-limit, limit);
  return t;
}

Tensor gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (auto& v : *t.values) v = stddev * rng.normal();
  return t;
}

Tensor uniform_range(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (auto& v : *t.values) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

Parameters init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t d = cfg.channels, dim = cfg.embed_dim, f = cfg.hidden_dim();
  const double dict_std = 1.0 / std::sqrt(static_cast<double>(dim));

  Parameters p;
  p.embed_w = xavier_uniform(d, dim, rng);
  p.embed_b = Tensor::zeros({dim}, true);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerParams lp;
    lp.w_q = xavier_uniform(dim, dim, rng);
    if (cfg.attention == AttentionMode::Self) {
      lp.w_k = xavier_uniform(dim, dim, rng);
      lp.w_v = xavier_uniform(dim, dim, rng);
      lp.prototypes = uniform_range(cfg.prototypes, cfg.window, -0.1, 0.1, rng);
    } else {
      lp.dict_k = gaussian(cfg.dict_size, dim, dict_std, rng);
      lp.dict_v = gaussian(cfg.dict_size, dim, dict_std, rng);
      lp.prototypes = uniform_range(cfg.prototypes, cfg.dict_size, -0.1, 0.1, rng);
    }
    lp.ln1_gain = Tensor::full({dim}, 1.0, true);
    lp.ln1_bias = Tensor::zeros({dim}, true);
    lp.ln2_gain = Tensor::full({dim}, 1.0, true);
    lp.ln2_bias = Tensor::zeros({dim}, true);
    lp.ffn_w1 = xavier_uniform(dim, f, rng);
    lp.ffn_b1 = Tensor::zeros({f}, true);
    lp.ffn_w2 = xavier_uniform(f, dim, rng);
    lp.ffn_b2 = Tensor::zeros({dim}, true);
    p.layers.push_back(std::move(lp));
  }
  p.proj_w = xavier_uniform(dim, d, rng);
  p.proj_b = Tensor::zeros({d}, true);
  return p;
}

std::size_t attention_block_param_count(const ModelConfig& cfg) {
  ModelConfig one = cfg;
  one.layers = 1;
  one.channels = std::max<std::size_t>(one.channels, 1);
  Parameters p = init_parameters(one, 0);
  const LayerParams& lp = p.layers[0];
  if (cfg.attention == AttentionMode::Self)
    return lp.w_q.numel() + lp.w_k.numel() + lp.w_v.numel();
  return lp.w_q.numel() + lp.dict_k.numel() + lp.dict_v.numel() + lp.prototypes.numel();
}

std::size_t attention_block_param_formula(const ModelConfig& cfg) {
  const std::size_t dh_h = cfg.head_dim() * cfg.heads;
  if (cfg.attention == AttentionMode::Self) return 3 * cfg.embed_dim * dh_h;
  return cfg.embed_dim * dh_h + 2 * cfg.dict_size * dh_h + cfg.prototypes * cfg.dict_size;
}

}  // namespace gdformer
