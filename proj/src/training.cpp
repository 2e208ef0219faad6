#include "gdformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "gdformer/config_json.hpp"
#include "gdformer/container.hpp"
#include "gdformer/errors.hpp"
#include "gdformer/rng.hpp"

namespace gdformer {

namespace {

// Sub-stream tags; the full derivation is documented in the README.
constexpr std::uint64_t kMaskStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

}  // namespace

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("train.lambda must be >= 0");
  if (lr <= 0.0) throw ConfigError("train.lr must be positive");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!use_recon_loss && !use_sim_loss)
    throw ConfigError("at least one of train.use_recon_loss / train.use_sim_loss must be enabled");
  if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be >= 0");
}

LossBreakdown compute_loss(const Tensor& x_raw, const ForwardOutput& out, double lambda,
                           const ModelConfig& mcfg, const TrainConfig& tcfg) {
  if (x_raw.shape != out.reconstruction.shape)
    throw TensorError("compute_loss: window " + shape_str(x_raw.shape) +
                      " vs reconstruction " + shape_str(out.reconstruction.shape));
  LossBreakdown lb;
  Tensor recon_term = sum(square(sub(out.reconstruction, x_raw)));
  Tensor sim_acc;
  for (std::size_t l : mcfg.effective_similarity_layers()) {
    const Tensor& s = out.similarity.at(l - 1);
    sim_acc = sim_acc.values ? add(sim_acc, s) : s;
  }
  Tensor sim_term = sum(sim_acc);
  lb.recon = recon_term.value();
  lb.sim = sim_term.value();

  if (tcfg.use_recon_loss && tcfg.use_sim_loss)
    lb.total = sub(recon_term, scale(sim_term, lambda));
  else if (tcfg.use_recon_loss)
    lb.total = recon_term;
  else if (tcfg.use_sim_loss)
    lb.total = scale(sim_term, -lambda);
  else
    throw ConfigError("compute_loss: both loss terms disabled");
  return lb;
}

namespace {

void clip_gradients(const std::vector<Tensor*>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const Tensor* p : params)
    for (double g : *p->grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (Tensor* p : params)
    for (double& g : *p->grad) g *= s;
}

// One forward/backward per window. Required in self-attention mode, where
// the map spans the window positions.
LossBreakdown window_step(Checkpoint& ck, const Tensor& window,
                          const std::vector<std::uint8_t>& mask, double inv_batch) {
  ForwardOutput out = model_forward(window, mask, ck.params, ck.model);
  LossBreakdown lb = compute_loss(window, out, ck.train.lambda, ck.model, ck.train);
  Tensor scaled = scale(lb.total, inv_batch);
  backward(scaled);
  return lb;
}

// Dictionary attention, layer norms and the feed-forward stack are all
// row-wise, so a whole batch of normalized windows can run as one stacked
// [B*T x d] matrix. The objective decomposes per window, so this matches
// the per-window path up to floating-point reassociation.
LossBreakdown batch_step(Checkpoint& ck, const std::vector<Tensor>& windows,
                         const std::vector<const std::vector<std::uint8_t>*>& masks,
                         double inv_batch) {
  const ModelConfig& mcfg = ck.model;
  const std::size_t t = mcfg.window, d = mcfg.channels, b = windows.size();

  Tensor stacked_norm = Tensor::zeros({b * t, d});
  Tensor stacked_raw = Tensor::zeros({b * t, d});
  Tensor scale_mat = Tensor::zeros({b * t, d});
  Tensor mean_mat = Tensor::zeros({b * t, d});
  for (std::size_t w = 0; w < b; ++w) {
    NormalizedWindow nw = instance_normalize(windows[w], *masks[w]);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t r = w * t + i;
        stacked_norm.at(r, c) = nw.values.at(i, c);
        stacked_raw.at(r, c) = windows[w].at(i, c);
        scale_mat.at(r, c) = nw.stats.std[c] + kNormEps;
        mean_mat.at(r, c) = nw.stats.mean[c];
      }
  }

  Tensor x = embed(stacked_norm, ck.params);
  std::vector<Tensor> similarity;
  for (std::size_t l = 0; l < mcfg.layers; ++l) {
    LayerForward lf = encoder_layer_forward(x, ck.params.layers[l], mcfg);
    x = lf.x_next;
    similarity.push_back(std::move(lf.attention.similarity));
  }
  Tensor recon_norm = add_rowvec(matmul(x, ck.params.proj_w), ck.params.proj_b);
  Tensor recon = add(mul(recon_norm, scale_mat), mean_mat);

  LossBreakdown lb;
  Tensor recon_term = sum(square(sub(recon, stacked_raw)));
  Tensor sim_acc;
  for (std::size_t l : mcfg.effective_similarity_layers()) {
    const Tensor& s = similarity.at(l - 1);
    sim_acc = sim_acc.values ? add(sim_acc, s) : s;
  }
  Tensor sim_term = sum(sim_acc);
  lb.recon = recon_term.value();
  lb.sim = sim_term.value();
  if (ck.train.use_recon_loss && ck.train.use_sim_loss)
    lb.total = sub(recon_term, scale(sim_term, ck.train.lambda));
  else if (ck.train.use_recon_loss)
    lb.total = recon_term;
  else
    lb.total = scale(sim_term, -ck.train.lambda);

  Tensor scaled = scale(lb.total, inv_batch);
  backward(scaled);
  return lb;
}

void train_epochs(Checkpoint& ck, const TimeSeriesDataset& ds) {
  const ModelConfig& mcfg = ck.model;
  const TrainConfig& tcfg = ck.train;
  if (mcfg.channels != ds.channels)
    throw ConfigError("model.channels " + std::to_string(mcfg.channels) +
                      " does not match dataset channels " + std::to_string(ds.channels));
  const WindowSet ws = make_windows(ds, mcfg.window);
  if (ws.count() == 0) throw DataError("no training windows");

  std::vector<Tensor*> trainable = ck.params.trainable();
  std::vector<Tensor> windows(ws.count());
  for (std::size_t i = 0; i < ws.count(); ++i) windows[i] = ws.window_at(i);
  const bool stackable = mcfg.attention == AttentionMode::Dictionary;

  for (std::size_t epoch = ck.epoch; epoch < tcfg.epochs; ++epoch) {
    std::vector<std::size_t> order(ws.count());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::mix(tcfg.seed, kShuffleStream, epoch));
    shuffle_rng.shuffle(order);

    double sum_recon = 0.0, sum_sim = 0.0, sum_total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += tcfg.batch_size) {
      const std::size_t b_end = std::min(order.size(), b + tcfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(b_end - b);
      for (Tensor* p : trainable) p->zero_grad();

      std::vector<std::vector<std::uint8_t>> masks(b_end - b);
      for (std::size_t k = b; k < b_end; ++k)
        masks[k - b] = draw_mask(
            mcfg.window, mcfg.channels,
            {mcfg.mask_ratio, Rng::mix(Rng::mix(tcfg.seed, kMaskStream, epoch), order[k])});

      if (stackable) {
        std::vector<Tensor> batch_windows;
        std::vector<const std::vector<std::uint8_t>*> batch_masks;
        for (std::size_t k = b; k < b_end; ++k) {
          batch_windows.push_back(windows[order[k]]);
          batch_masks.push_back(&masks[k - b]);
        }
        LossBreakdown lb = batch_step(ck, batch_windows, batch_masks, inv_batch);
        sum_recon += lb.recon;
        sum_sim += lb.sim;
        sum_total += lb.total.value();
      } else {
        for (std::size_t k = b; k < b_end; ++k) {
          LossBreakdown lb = window_step(ck, windows[order[k]], masks[k - b], inv_batch);
          sum_recon += lb.recon;
          sum_sim += lb.sim;
          sum_total += lb.total.value();
        }
      }
      clip_gradients(trainable, tcfg.grad_clip);
      ck.optimizer.step(trainable);
    }
    const double inv_n = 1.0 / static_cast<double>(ws.count());
    ck.history.push_back(
        {epoch + 1, sum_recon * inv_n, sum_sim * inv_n, sum_total * inv_n});
    ck.epoch = epoch + 1;
  }
}

}  // namespace

Checkpoint fit(const TimeSeriesDataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg) {
  mcfg.validate();
  Checkpoint ck;
  ck.model = mcfg;
  ck.train = tcfg;
  ck.params = init_parameters(mcfg, tcfg.seed);
  ck.optimizer = AdamState(ck.params.trainable(), AdamConfig{tcfg.lr});
  train_epochs(ck, ds);
  return ck;
}

void resume_fit(Checkpoint& ck, const TimeSeriesDataset& ds) {
  train_epochs(ck, ds);
}

Checkpoint transfer_fit(const Checkpoint& source, const TimeSeriesDataset& target,
                        ModelConfig target_cfg, const TrainConfig& tcfg) {
  const ModelConfig& src = source.model;
  auto require_match = [&](std::size_t a, std::size_t b, const char* field) {
    if (a != b)
      throw ConfigError(std::string("transfer: ") + field + " mismatch: source " +
                        std::to_string(a) + " vs target " + std::to_string(b));
  };
  require_match(src.embed_dim, target_cfg.embed_dim, "embed_dim");
  require_match(src.layers, target_cfg.layers, "layers");
  require_match(src.heads, target_cfg.heads, "heads");
  require_match(src.dict_size, target_cfg.dict_size, "dict_size");
  require_match(src.prototypes, target_cfg.prototypes, "prototypes");
  if (src.attention != AttentionMode::Dictionary ||
      target_cfg.attention != AttentionMode::Dictionary)
    throw ConfigError("transfer: both models must use dictionary attention");
  target_cfg.validate();

  Checkpoint ck;
  ck.model = target_cfg;
  ck.train = tcfg;
  ck.params = init_parameters(target_cfg, tcfg.seed);
  for (std::size_t l = 0; l < target_cfg.layers; ++l) {
    const LayerParams& from = source.params.layers[l];
    LayerParams& to = ck.params.layers[l];
    to.dict_k = from.dict_k.clone(false);
    to.dict_v = from.dict_v.clone(false);
    to.prototypes = from.prototypes.clone(false);
    const std::string p = "layer" + std::to_string(l) + ".";
    ck.frozen.push_back(p + "dict_k");
    ck.frozen.push_back(p + "dict_v");
    ck.frozen.push_back(p + "prototypes");
  }
  ck.optimizer = AdamState(ck.params.trainable(), AdamConfig{tcfg.lr});
  train_epochs(ck, target);
  return ck;
}

// ------------------------------------------------------------ checkpoints

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json meta;
  meta["kind"] = "checkpoint";
  meta["format"] = 1;
  meta["model"] = model_config_to_json(ck.model);
  meta["train"] = train_config_to_json(ck.train);
  meta["epoch"] = ck.epoch;
  meta["rng"] = {{"seed", ck.train.seed}};
  const AdamConfig& acfg = ck.optimizer.config();
  meta["optimizer"] = {{"step", ck.optimizer.step_count()},
                       {"lr", acfg.lr},
                       {"beta1", acfg.beta1},
                       {"beta2", acfg.beta2},
                       {"eps", acfg.eps}};
  meta["frozen"] = ck.frozen;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : ck.history)
    hist.push_back({{"epoch", h.epoch}, {"recon", h.recon}, {"sim", h.sim}, {"total", h.total}});
  meta["history"] = std::move(hist);

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [name, t] : ck.params.named()) tensors.emplace_back("param/" + name, t);

  // Moment buffers are stored per trainable parameter, in list order.
  std::vector<Tensor> moments;
  std::vector<std::pair<std::string, const Tensor*>> trainable_named;
  for (const auto& [name, t] : ck.params.named())
    if (t->requires_grad) trainable_named.emplace_back(name, t);
  const auto& m = ck.optimizer.first_moments();
  const auto& v = ck.optimizer.second_moments();
  moments.reserve(trainable_named.size() * 2);
  for (std::size_t i = 0; i < trainable_named.size(); ++i) {
    moments.push_back(Tensor::from(trainable_named[i].second->shape, m.at(i)));
    moments.push_back(Tensor::from(trainable_named[i].second->shape, v.at(i)));
  }
  for (std::size_t i = 0; i < trainable_named.size(); ++i) {
    tensors.emplace_back("adam/m/" + trainable_named[i].first, &moments[2 * i]);
    tensors.emplace_back("adam/v/" + trainable_named[i].first, &moments[2 * i + 1]);
  }
  write_container(path, meta, tensors);
}

Checkpoint load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  if (c.meta.value("kind", "") != "checkpoint")
    throw CorruptManifestError("not a checkpoint container: " + path);
  Checkpoint ck;
  ck.model = model_config_from_json(c.meta.at("model"));
  ck.train = train_config_from_json(c.meta.at("train"));
  ck.epoch = c.meta.at("epoch").get<std::size_t>();
  ck.frozen = c.meta.value("frozen", std::vector<std::string>{});
  for (const auto& h : c.meta.value("history", nlohmann::json::array()))
    ck.history.push_back({h.at("epoch").get<std::size_t>(), h.at("recon").get<double>(),
                          h.at("sim").get<double>(), h.at("total").get<double>()});

  // Template parameters give the expected names and shapes.
  ck.params = init_parameters(ck.model, 0);
  for (auto& [name, t] : ck.params.named()) {
    const std::string key = "param/" + name;
    auto it = c.tensors.find(key);
    if (it == c.tensors.end())
      throw CorruptManifestError("checkpoint missing tensor '" + key + "' in " + path);
    if (it->second.shape != t->shape)
      throw ShapeMismatchError("checkpoint tensor '" + key + "' has shape " +
                               shape_str(it->second.shape) + ", expected " + shape_str(t->shape));
    const bool frozen =
        std::find(ck.frozen.begin(), ck.frozen.end(), name) != ck.frozen.end();
    *t = it->second.clone(!frozen);
  }

  std::vector<Tensor*> trainable = ck.params.trainable();
  std::vector<std::string> trainable_names;
  for (auto& [name, t] : ck.params.named())
    if (t->requires_grad) trainable_names.push_back(name);

  const auto& opt = c.meta.at("optimizer");
  AdamConfig acfg{opt.at("lr").get<double>(), opt.at("beta1").get<double>(),
                  opt.at("beta2").get<double>(), opt.at("eps").get<double>()};
  ck.optimizer = AdamState(trainable, acfg);
  std::vector<std::vector<double>> m, v;
  for (std::size_t i = 0; i < trainable_names.size(); ++i) {
    const std::string mk = "adam/m/" + trainable_names[i];
    const std::string vk = "adam/v/" + trainable_names[i];
    if (!c.tensors.contains(mk) || !c.tensors.contains(vk))
      throw CorruptManifestError("checkpoint missing optimizer state for '" +
                                 trainable_names[i] + "' in " + path);
    if (c.tensors.at(mk).shape != trainable[i]->shape)
      throw ShapeMismatchError("optimizer moment shape mismatch for '" + trainable_names[i] +
                               "' in " + path);
    m.push_back(*c.tensors.at(mk).values);
    v.push_back(*c.tensors.at(vk).values);
  }
  ck.optimizer.restore(std::move(m), std::move(v), opt.at("step").get<std::uint64_t>());
  return ck;
}

void write_loss_log(const std::string& path, const std::vector<EpochLog>& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "epoch,recon,sim,total\n";
  char buf[96];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", h.epoch, h.recon, h.sim, h.total);
    out << buf;
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace gdformer
