#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gdformer/errors.hpp"
#include "gdformer/experiments.hpp"
#include "gdformer/model.hpp"
#include "gdformer/optim.hpp"
#include "gdformer/rng.hpp"
#include "oracles.hpp"

using namespace gdformer;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.window = 4;
  cfg.channels = 2;
  cfg.embed_dim = 8;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.dict_size = 3;
  cfg.prototypes = 2;
  return cfg;
}

Tensor random_window(const ModelConfig& cfg, std::uint64_t seed, double spread = 1.0) {
  Rng rng(seed);
  Tensor w = Tensor::zeros({cfg.window, cfg.channels});
  for (auto& v : *w.values) v = spread * rng.normal();
  return w;
}

}  // namespace

TEST_CASE("instance normalization zeroes constant channels") {
  Tensor window = Tensor::zeros({5, 2});
  for (std::size_t i = 0; i < 5; ++i) {
    window.at(i, 0) = 4.0;  // constant channel
    window.at(i, 1) = static_cast<double>(i);
  }
  NormalizedWindow nw = instance_normalize(window, {});
  for (std::size_t i = 0; i < 5; ++i) CHECK(nw.values.at(i, 0) == 0.0);
}

TEST_CASE("instance normalization centers and scales each channel") {
  ModelConfig cfg = tiny_config();
  cfg.window = 64;
  Tensor window = random_window(cfg, 7, 50.0);
  NormalizedWindow nw = instance_normalize(window, {});
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    double mu = 0.0;
    for (std::size_t i = 0; i < cfg.window; ++i) mu += nw.values.at(i, c);
    mu /= static_cast<double>(cfg.window);
    CHECK(std::fabs(mu) < 1e-10);
    double var = 0.0;
    for (std::size_t i = 0; i < cfg.window; ++i) {
      const double x = nw.values.at(i, c) - mu;
      var += x * x;
    }
    var /= static_cast<double>(cfg.window);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-6);
  }
}

TEST_CASE("denormalize inverts normalization on unmasked entries") {
  ModelConfig cfg = tiny_config();
  cfg.window = 16;
  Tensor window = random_window(cfg, 21, 3.0);
  NormalizedWindow nw = instance_normalize(window, {});
  Tensor back = denormalize(nw.values, nw.stats);
  for (std::size_t i = 0; i < window.numel(); ++i)
    CHECK(back.at(i) == doctest::Approx(window.at(i)).epsilon(1e-10));
}

TEST_CASE("normalization statistics skip masked entries") {
  Tensor window = Tensor::zeros({4, 1});
  window.at(0, 0) = 1.0;
  window.at(1, 0) = 2.0;
  window.at(2, 0) = 3.0;
  window.at(3, 0) = 1000.0;  // masked out
  std::vector<std::uint8_t> mask{0, 0, 0, 1};
  NormalizedWindow nw = instance_normalize(window, mask);
  CHECK(nw.stats.mean[0] == doctest::Approx(2.0));
  CHECK(nw.values.at(3, 0) == 0.0);  // masked entry zeroed
}

TEST_CASE("embed: zero weights give bias rows, identity passes through") {
  ModelConfig cfg = tiny_config();
  Parameters p = init_parameters(cfg, 0);
  for (auto& v : *p.embed_w.values) v = 0.0;
  for (std::size_t j = 0; j < cfg.embed_dim; ++j) p.embed_b.at(j) = static_cast<double>(j);
  Tensor x = random_window(cfg, 3);
  Tensor e = embed(x, p);
  for (std::size_t i = 0; i < cfg.window; ++i)
    for (std::size_t j = 0; j < cfg.embed_dim; ++j)
      CHECK(e.at(i, j) == static_cast<double>(j));

  ModelConfig square_cfg = tiny_config();
  square_cfg.channels = square_cfg.embed_dim = 4;
  square_cfg.heads = 1;
  Parameters ps = init_parameters(square_cfg, 0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) ps.embed_w.at(i, j) = i == j ? 1.0 : 0.0;
  for (auto& v : *ps.embed_b.values) v = 0.0;
  Tensor xi = random_window(square_cfg, 5);
  Tensor ei = embed(xi, ps);
  for (std::size_t i = 0; i < xi.numel(); ++i) CHECK(ei.at(i) == xi.at(i));
}

TEST_CASE("embed gradient vs central differences") {
  ModelConfig cfg = tiny_config();
  Parameters p = init_parameters(cfg, 11);
  Tensor x = random_window(cfg, 13);
  auto make_loss = [&] { return sum(square(embed(x, p))); };
  CHECK(finite_diff_check(make_loss, {&p.embed_w, &p.embed_b}, 1e-5) < 1e-5);
}

TEST_CASE("zero query projection gives uniform attention rows") {
  ModelConfig cfg = tiny_config();
  Parameters p = init_parameters(cfg, 2);
  for (auto& v : *p.layers[0].w_q.values) v = 0.0;
  Tensor x = Tensor::zeros({cfg.window, cfg.embed_dim});
  Rng rng(3);
  for (auto& v : *x.values) v = rng.normal();
  AttentionResult res = dictionary_cross_attention(x, p.layers[0], cfg);
  const double uniform = 1.0 / static_cast<double>(cfg.dict_size);
  for (const Tensor& map : res.maps)
    for (std::size_t i = 0; i < map.numel(); ++i)
      CHECK(map.at(i) == doctest::Approx(uniform).epsilon(1e-12));
}

TEST_CASE("similarity against a single uniform prototype") {
  // softmax([0, 0]) = [0.5, 0.5]; S = M softmax(E)^T
  Tensor map = Tensor::from({2, 2}, {1.0, 0.0, 0.5, 0.5});
  Tensor e = Tensor::from({1, 2}, {0.0, 0.0});
  Tensor s = similarity_scores(map, softmax(e, 1), SimilarityMetric::Dot);
  CHECK(s.at(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.at(1, 0) == doctest::Approx(0.5).epsilon(1e-14));
  Tensor s_hat = sum_axis(s, 1);
  CHECK(s_hat.at(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s_hat.at(1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("cross attention matches the straight-line oracle on 20 instances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    ModelConfig cfg = tiny_config();
    cfg.window = 3 + rng.below(3);
    cfg.heads = 1 + rng.below(2);
    cfg.embed_dim = 4 * cfg.heads;
    cfg.dict_size = 2 + rng.below(2);
    cfg.prototypes = 2;
    Parameters p = init_parameters(cfg, seed);
    Tensor x = Tensor::zeros({cfg.window, cfg.embed_dim});
    for (auto& v : *x.values) v = rng.normal();

    AttentionResult res = dictionary_cross_attention(x, p.layers[0], cfg);
    oracle::CrossAttention ref = oracle::brute_cross_attention(
        oracle::to_mat(x), oracle::to_mat(p.layers[0].w_q), oracle::to_mat(p.layers[0].dict_k),
        oracle::to_mat(p.layers[0].dict_v), oracle::to_mat(p.layers[0].prototypes), cfg.heads);

    for (std::size_t i = 0; i < cfg.window; ++i) {
      CHECK(res.similarity.at(i) == doctest::Approx(ref.s_hat[i]).epsilon(1e-10));
      for (std::size_t j = 0; j < cfg.embed_dim; ++j)
        CHECK(res.fused.at(i, j) == doctest::Approx(ref.fused[i][j]).epsilon(1e-10));
    }
    for (std::size_t h = 0; h < cfg.heads; ++h)
      for (std::size_t i = 0; i < cfg.window; ++i)
        for (std::size_t n = 0; n < cfg.dict_size; ++n)
          CHECK(res.maps[h].at(i, n) == doctest::Approx(ref.maps[h][i][n]).epsilon(1e-10));
  }
}

TEST_CASE("encoder layer with zero FFN weights degenerates to LN of residual") {
  ModelConfig cfg = tiny_config();
  Parameters p = init_parameters(cfg, 4);
  LayerParams& lp = p.layers[0];
  for (auto& v : *lp.ffn_w1.values) v = 0.0;
  for (auto& v : *lp.ffn_w2.values) v = 0.0;
  for (std::size_t j = 0; j < cfg.embed_dim; ++j) lp.ffn_b2.at(j) = 0.25;

  Tensor x = Tensor::zeros({cfg.window, cfg.embed_dim});
  Rng rng(5);
  for (auto& v : *x.values) v = rng.normal();
  LayerForward lf = encoder_layer_forward(x, lp, cfg);

  Tensor u = layer_norm(add(x, lf.attention.fused), lp.ln1_gain, lp.ln1_bias, kNormEps);
  Tensor expect = layer_norm(add_rowvec(u, lp.ffn_b2), lp.ln2_gain, lp.ln2_bias, kNormEps);
  for (std::size_t i = 0; i < expect.numel(); ++i)
    CHECK(lf.x_next.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
  CHECK(lf.x_next.rows() == cfg.window);
  CHECK(lf.x_next.cols() == cfg.embed_dim);
}

TEST_CASE("encoder layer gradient vs central differences") {
  ModelConfig cfg = tiny_config();
  Parameters p = init_parameters(cfg, 6);
  Tensor x = Tensor::zeros({cfg.window, cfg.embed_dim});
  Rng rng(7);
  for (auto& v : *x.values) v = rng.normal();
  LayerParams& lp = p.layers[0];
  std::vector<Tensor*> params{&lp.w_q,      &lp.dict_k,  &lp.dict_v, &lp.prototypes,
                              &lp.ln1_gain, &lp.ln1_bias, &lp.ffn_w1, &lp.ffn_b1,
                              &lp.ffn_w2,   &lp.ffn_b2,   &lp.ln2_gain, &lp.ln2_bias};
  // weight the outputs so the loss is direction-sensitive through the
  // final layer norm
  Tensor weights = Tensor::zeros({cfg.window, cfg.embed_dim});
  Rng wrng(8);
  for (auto& v : *weights.values) v = wrng.normal();
  auto make_loss = [&] {
    LayerForward lf = encoder_layer_forward(x, lp, cfg);
    return sub(sum(mul(lf.x_next, weights)), sum(lf.attention.similarity));
  };
  CHECK(finite_diff_check(make_loss, params, 1e-5) < 1e-4);
}

TEST_CASE("model forward shapes and similarity ranges") {
  for (auto mode : {AttentionMode::Dictionary, AttentionMode::Self}) {
    ModelConfig cfg = tiny_config();
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.attention = mode;
    Parameters p = init_parameters(cfg, 8);
    Tensor window = random_window(cfg, 9);
    ForwardOutput out = model_forward(window, {}, p, cfg, true);

    CHECK(out.reconstruction.rows() == cfg.window);
    CHECK(out.reconstruction.cols() == cfg.channels);
    CHECK(out.similarity.size() == cfg.layers);
    const double cap = static_cast<double>(cfg.heads * cfg.prototypes);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      CHECK(out.similarity[l].numel() == cfg.window);
      for (std::size_t i = 0; i < cfg.window; ++i) {
        CHECK(out.similarity[l].at(i) >= 0.0);
        CHECK(out.similarity[l].at(i) <= cap);
      }
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        const Tensor& s = out.head_sim[l][h];
        for (std::size_t i = 0; i < s.numel(); ++i) {
          CHECK(s.at(i) >= 0.0);
          CHECK(s.at(i) <= 1.0);
        }
        const Tensor& m = out.maps[l][h];
        for (std::size_t r = 0; r < m.rows(); ++r) {
          double rowsum = 0.0;
          for (std::size_t ccc = 0; ccc < m.cols(); ++ccc) {
            CHECK(m.at(r, ccc) >= 0.0);
            rowsum += m.at(r, ccc);
          }
          CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("single-layer forward equals the composed operations") {
  ModelConfig cfg = tiny_config();
  Parameters p = init_parameters(cfg, 10);
  Tensor window = random_window(cfg, 11);
  ForwardOutput out = model_forward(window, {}, p, cfg);

  NormalizedWindow nw = instance_normalize(window, {});
  Tensor x = embed(nw.values, p);
  LayerForward lf = encoder_layer_forward(x, p.layers[0], cfg);
  Tensor recon = denormalize(add_rowvec(matmul(lf.x_next, p.proj_w), p.proj_b), nw.stats);
  for (std::size_t i = 0; i < recon.numel(); ++i)
    CHECK(out.reconstruction.at(i) == doctest::Approx(recon.at(i)).epsilon(1e-12));
  for (std::size_t i = 0; i < cfg.window; ++i)
    CHECK(out.similarity[0].at(i) ==
          doctest::Approx(lf.attention.similarity.at(i)).epsilon(1e-12));
}

TEST_CASE("initialization is deterministic under the seed") {
  ModelConfig cfg = tiny_config();
  Parameters a = init_parameters(cfg, 42);
  Parameters b = init_parameters(cfg, 42);
  auto na = a.named();
  auto nb = b.named();
  REQUIRE(na.size() == nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) CHECK(*na[i].second->values == *nb[i].second->values);

  Parameters c = init_parameters(cfg, 43);
  CHECK(*c.embed_w.values != *a.embed_w.values);
}

TEST_CASE("dictionary attention block parameter count matches the formula") {
  ModelConfig cfg;
  cfg.embed_dim = 512;
  cfg.heads = 8;
  cfg.dict_size = 16;
  cfg.prototypes = 12;
  cfg.channels = 1;
  cfg.window = 100;
  CHECK(attention_block_param_formula(cfg) == 278720);
  CHECK(attention_block_param_count(cfg) == 278720);

  ModelConfig self_cfg = cfg;
  self_cfg.attention = AttentionMode::Self;
  CHECK(attention_block_param_formula(self_cfg) == 3 * 512 * 512);
  CHECK(attention_block_param_count(self_cfg) == 3 * 512 * 512);
}

TEST_CASE("similarity variants: kl peak, js symmetry and bounds") {
  Tensor p = Tensor::from({1, 3}, {0.2, 0.5, 0.3});
  Tensor s_same = similarity_scores(p, p, SimilarityMetric::Kl);
  CHECK(s_same.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor q = Tensor::from({1, 3}, {0.6, 0.1, 0.3});
  Tensor ab = similarity_scores(p, q, SimilarityMetric::Js);
  Tensor ba = similarity_scores(q, p, SimilarityMetric::Js);
  CHECK(ab.at(0, 0) == doctest::Approx(ba.at(0, 0)).epsilon(1e-12));

  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor la = Tensor::zeros({1, 4});
    Tensor lb = Tensor::zeros({1, 4});
    for (auto& v : *la.values) v = 3.0 * rng.normal();
    for (auto& v : *lb.values) v = 3.0 * rng.normal();
    Tensor s = similarity_scores(softmax(la, 1), softmax(lb, 1), SimilarityMetric::Js);
    CHECK(s.at(0, 0) <= 1e-12);
    CHECK(s.at(0, 0) >= -std::log(2.0) - 1e-12);
  }
}

TEST_CASE("permuting dictionary entries leaves the forward output unchanged") {
  ModelConfig cfg = tiny_config();
  cfg.dict_size = 4;
  cfg.layers = 2;
  Parameters p = init_parameters(cfg, 14);
  Tensor window = random_window(cfg, 15);
  ForwardOutput base = model_forward(window, {}, p, cfg);

  const std::vector<std::size_t> perm{2, 0, 3, 1};
  for (LayerParams& lp : p.layers) {
    Tensor k2 = Tensor::zeros(lp.dict_k.shape, true);
    Tensor v2 = Tensor::zeros(lp.dict_v.shape, true);
    Tensor e2 = Tensor::zeros(lp.prototypes.shape, true);
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
        k2.at(n, j) = lp.dict_k.at(perm[n], j);
        v2.at(n, j) = lp.dict_v.at(perm[n], j);
      }
    for (std::size_t q = 0; q < cfg.prototypes; ++q)
      for (std::size_t n = 0; n < 4; ++n) e2.at(q, n) = lp.prototypes.at(q, perm[n]);
    lp.dict_k = k2;
    lp.dict_v = v2;
    lp.prototypes = e2;
  }
  ForwardOutput permuted = model_forward(window, {}, p, cfg);
  for (std::size_t i = 0; i < base.reconstruction.numel(); ++i)
    CHECK(permuted.reconstruction.at(i) ==
          doctest::Approx(base.reconstruction.at(i)).epsilon(1e-10));
  for (std::size_t l = 0; l < cfg.layers; ++l)
    for (std::size_t i = 0; i < cfg.window; ++i)
      CHECK(permuted.similarity[l].at(i) ==
            doctest::Approx(base.similarity[l].at(i)).epsilon(1e-10));
}

TEST_CASE("self-attention mode sizes prototypes over the window") {
  ModelConfig cfg = tiny_config();
  cfg.attention = AttentionMode::Self;
  Parameters p = init_parameters(cfg, 16);
  CHECK(p.layers[0].prototypes.rows() == cfg.prototypes);
  CHECK(p.layers[0].prototypes.cols() == cfg.window);
  CHECK(p.layers[0].w_k.values != nullptr);
  CHECK(p.layers[0].w_v.values != nullptr);
  Tensor window = random_window(cfg, 17);
  ForwardOutput out = model_forward(window, {}, p, cfg, true);
  CHECK(out.maps[0][0].rows() == cfg.window);
  CHECK(out.maps[0][0].cols() == cfg.window);
}

TEST_CASE("config validation rejects bad shapes") {
  ModelConfig cfg = tiny_config();
  cfg.embed_dim = 100;
  cfg.heads = 8;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("100") != std::string::npos);
    CHECK(msg.find("8") != std::string::npos);
  }
  ModelConfig dup = tiny_config();
  dup.similarity_layers = {1, 1};
  CHECK_THROWS_AS(dup.validate(), ConfigError);
  ModelConfig range = tiny_config();
  range.similarity_layers = {2};
  CHECK_THROWS_AS(range.validate(), ConfigError);
}

TEST_CASE("cross attention scales sub-quadratically in window length") {
  ModelConfig cfg;
  cfg.channels = 1;
  cfg.embed_dim = 64;
  cfg.heads = 4;
  cfg.layers = 1;
  cfg.dict_size = 8;
  cfg.prototypes = 4;
  cfg.window = 100;
  const double ca100 = time_attention_block(cfg, AttentionMode::Dictionary, 100);
  const double ca400 = time_attention_block(cfg, AttentionMode::Dictionary, 400);
  const double sa100 = time_attention_block(cfg, AttentionMode::Self, 100);
  const double sa400 = time_attention_block(cfg, AttentionMode::Self, 400);
  const double ca_ratio = ca400 / ca100;
  const double sa_ratio = sa400 / sa100;
  INFO("ca " << ca_ratio << " self " << sa_ratio);
  CHECK(ca_ratio <= 5.0);
  CHECK(sa_ratio > 5.0);
}
