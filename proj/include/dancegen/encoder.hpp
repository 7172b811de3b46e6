#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/matrix.hpp"
#include "dancegen/params.hpp"
#include "dancegen/rng.hpp"
#include "dancegen/tensor.hpp"

// Transformer-style music encoder. Each layer runs multi-head self-attention
// with a sliding local window (softmax truncated and renormalized at sequence
// edges), concatenates heads, projects back to the model width, then applies
// a position-wise feed-forward sublayer. Both sublayers use residual
// connections and layer normalization, switchable via config.

namespace dancegen {

struct EncoderConfig {
  int n_layers = 2;
  int n_heads = 8;
  int d_x = 438;
  int d_z = 256;
  int d_k = 64;
  int d_v = 64;
  int window = 100;
  int ffn_hidden = 1024;
  bool layer_norm = true;
  bool positional = false;  // optional sinusoidal encoding added after embedding

  void validate() const {
    if (n_layers < 1 || n_heads < 1 || window < 1 || d_x < 1 || d_z < 1 || d_k < 1 ||
        d_v < 1 || ffn_hidden < 1)
      throw ConfigError("EncoderConfig: all dimensions must be >= 1");
  }
};

struct EncoderParams {
  struct Head {
    Tensor wq;  // d_z x d_k
    Tensor wk;  // d_z x d_k
    Tensor wv;  // d_z x d_v
  };
  struct Layer {
    std::vector<Head> heads;
    Tensor wo;  // (heads * d_v) x d_z
    Tensor ln1_gain, ln1_bias;
    Tensor ffn_w1, ffn_b1;  // d_z x ffn_hidden, 1 x ffn_hidden
    Tensor ffn_w2, ffn_b2;  // ffn_hidden x d_z, 1 x d_z
    Tensor ln2_gain, ln2_bias;
  };

  Tensor embed_w;  // d_x x d_z
  std::vector<Layer> layers;

  static EncoderParams init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    auto glorot = [&rng](int fan_in, int fan_out) {
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      return Tensor::rand_uniform({fan_in, fan_out}, rng, -bound, bound, true);
    };
    EncoderParams p;
    p.embed_w = glorot(cfg.d_x, cfg.d_z);
    p.layers.resize(cfg.n_layers);
    for (auto& layer : p.layers) {
      layer.heads.resize(cfg.n_heads);
      for (auto& head : layer.heads) {
        head.wq = glorot(cfg.d_z, cfg.d_k);
        head.wk = glorot(cfg.d_z, cfg.d_k);
        head.wv = glorot(cfg.d_z, cfg.d_v);
      }
      layer.wo = glorot(cfg.n_heads * cfg.d_v, cfg.d_z);
      layer.ln1_gain = Tensor::from({1, cfg.d_z}, std::vector<double>(cfg.d_z, 1.0), true);
      layer.ln1_bias = Tensor::zeros({1, cfg.d_z}, true);
      layer.ffn_w1 = glorot(cfg.d_z, cfg.ffn_hidden);
      layer.ffn_b1 = Tensor::zeros({1, cfg.ffn_hidden}, true);
      layer.ffn_w2 = glorot(cfg.ffn_hidden, cfg.d_z);
      layer.ffn_b2 = Tensor::zeros({1, cfg.d_z}, true);
      layer.ln2_gain = Tensor::from({1, cfg.d_z}, std::vector<double>(cfg.d_z, 1.0), true);
      layer.ln2_bias = Tensor::zeros({1, cfg.d_z}, true);
    }
    return p;
  }

  void register_into(ParamSet& set, const std::string& prefix = "encoder") const {
    set.add(prefix + ".embed", embed_w);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto& layer = layers[li];
      const std::string lp = prefix + ".layer" + std::to_string(li);
      for (std::size_t hi = 0; hi < layer.heads.size(); ++hi) {
        const std::string hp = lp + ".head" + std::to_string(hi);
        set.add(hp + ".wq", layer.heads[hi].wq);
        set.add(hp + ".wk", layer.heads[hi].wk);
        set.add(hp + ".wv", layer.heads[hi].wv);
      }
      set.add(lp + ".wo", layer.wo);
      set.add(lp + ".ln1_gain", layer.ln1_gain);
      set.add(lp + ".ln1_bias", layer.ln1_bias);
      set.add(lp + ".ffn_w1", layer.ffn_w1);
      set.add(lp + ".ffn_b1", layer.ffn_b1);
      set.add(lp + ".ffn_w2", layer.ffn_w2);
      set.add(lp + ".ffn_b2", layer.ffn_b2);
      set.add(lp + ".ln2_gain", layer.ln2_gain);
      set.add(lp + ".ln2_bias", layer.ln2_bias);
    }
  }
};

// Inclusive 1-based attention window for position i of a length-n sequence:
// [max(1, i - floor(k/2)), min(n, i + floor(k/2))].
inline std::pair<int, int> local_window(int i, int n, int k) {
  if (i < 1 || i > n) throw Error("local_window: index " + std::to_string(i) + " outside [1, " +
                                  std::to_string(n) + "]");
  const int half = k / 2;
  return {std::max(1, i - half), std::min(n, i + half)};
}

// Number of score pairs a length-n windowed attention pass computes.
inline std::size_t attended_pair_count(int n, int k) {
  std::size_t pairs = 0;
  for (int i = 1; i <= n; ++i) {
    const auto [lo, hi] = local_window(i, n, k);
    pairs += static_cast<std::size_t>(hi - lo + 1);
  }
  return pairs;
}

// Single-head local attention in inspection form: exposes the per-pair weight
// matrix (exact zeros outside each row's window) and the computed pair count.
struct LocalAttentionResult {
  Matrix outputs;  // n x d_v
  Matrix alpha;    // n x n, row-stochastic within windows, 0 elsewhere
  std::size_t pairs = 0;
};

inline LocalAttentionResult local_attention(const Matrix& u, const Matrix& wq, const Matrix& wk,
                                            const Matrix& wv, int window) {
  NoGradGuard no_grad;
  auto ut = Tensor::from_matrix(u);
  auto q = matmul(ut, Tensor::from_matrix(wq));
  auto k = matmul(ut, Tensor::from_matrix(wk));
  auto v = matmul(ut, Tensor::from_matrix(wv));
  const int n = u.rows;
  const int dk = q.cols(), dv = v.cols();
  const int half = window / 2;
  const int bw = 2 * half + 1;
  LocalAttentionResult res;
  res.outputs = Matrix(n, dv);
  std::vector<double> band(static_cast<std::size_t>(n) * bw, 0.0);
  res.pairs = detail::windowed_attention_core(q.values().data(), k.values().data(),
                                              v.values().data(), n, dk, dv, window,
                                              res.outputs.v.data(), band.data());
  res.alpha = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    for (int t = lo; t <= hi; ++t)
      res.alpha.at(i, t) = band[static_cast<std::size_t>(i) * bw + (t - (i - half))];
  }
  return res;
}

// Linear embedding U = X * W^E (no bias).
inline Tensor embed(const Tensor& x, const Tensor& embed_w) {
  if (x.cols() != embed_w.rows())
    throw ShapeError("embed: input has " + std::to_string(x.cols()) + " feature columns, W^E expects " +
                     std::to_string(embed_w.rows()));
  return matmul(x, embed_w);
}

namespace detail {

inline Tensor sinusoidal_encoding(int n, int d) {
  std::vector<double> pe(static_cast<std::size_t>(n) * d);
  for (int pos = 0; pos < n; ++pos)
    for (int j = 0; j < d; ++j) {
      const double rate = std::pow(10000.0, -2.0 * (j / 2) / static_cast<double>(d));
      pe[static_cast<std::size_t>(pos) * d + j] =
          (j % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  return Tensor::from({n, d}, std::move(pe));
}

}  // namespace detail

// Full encoder stack: X (n x d_x) -> Z (n x d_z). Builds tape ops, so a loss
// on the output backpropagates into every encoder parameter.
inline Tensor encode(const Tensor& x, const EncoderParams& params, const EncoderConfig& cfg) {
  cfg.validate();
  const int n = x.rows();
  Tensor u = embed(x, params.embed_w);
  if (cfg.positional) u = add(u, detail::sinusoidal_encoding(n, cfg.d_z));

  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& layer = params.layers[li];

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(layer.heads.size());
    for (const auto& head : layer.heads) {
      auto q = matmul(u, head.wq);
      auto k = matmul(u, head.wk);
      auto v = matmul(u, head.wv);
      head_outputs.push_back(windowed_attention(q, k, v, cfg.window));
    }
    Tensor attn = matmul(concat_cols(head_outputs), layer.wo);
    Tensor sub1 = add(u, attn);
    if (cfg.layer_norm) sub1 = layer_norm_rows(sub1, layer.ln1_gain, layer.ln1_bias);

    Tensor hidden = relu(add(matmul(sub1, layer.ffn_w1), tile_rows(layer.ffn_b1, n)));
    Tensor ffn = add(matmul(hidden, layer.ffn_w2), tile_rows(layer.ffn_b2, n));
    Tensor sub2 = add(sub1, ffn);
    if (cfg.layer_norm) sub2 = layer_norm_rows(sub2, layer.ln2_gain, layer.ln2_bias);

    if (!sub2.all_finite())
      throw NumericError("encode: non-finite values after layer " + std::to_string(li));
    u = sub2;
  }
  return u;
}

inline Matrix encode(const Matrix& x, const EncoderParams& params, const EncoderConfig& cfg) {
  NoGradGuard no_grad;
  return encode(Tensor::from_matrix(x), params, cfg).to_matrix();
}

}  // namespace dancegen
