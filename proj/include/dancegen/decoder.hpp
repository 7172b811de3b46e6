#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/matrix.hpp"
#include "dancegen/params.hpp"
#include "dancegen/rng.hpp"
#include "dancegen/tensor.hpp"

// Autoregressive dance decoder: a stack of gated recurrent (LSTM-style)
// cells consuming the previous pose, with the output pose projected from the
// top hidden state concatenated with the per-step music latent z_i. The
// initial hidden and cell vectors of every layer are sampled from a standard
// normal to vary the generated sequences.

namespace dancegen {

struct DecoderConfig {
  int n_layers = 3;
  int d_s = 1024;
  int d_y = 50;
  int d_z = 256;

  void validate() const {
    if (n_layers < 1 || d_s < 1 || d_y < 1 || d_z < 1)
      throw ConfigError("DecoderConfig: all dimensions must be >= 1");
  }
};

struct DecoderParams {
  struct Cell {
    Tensor w;  // (input_dim + d_s) x 4*d_s, gate order: input, forget, output, candidate
    Tensor b;  // 1 x 4*d_s
  };
  std::vector<Cell> cells;
  Tensor out_w;  // (d_s + d_z) x d_y
  Tensor out_b;  // 1 x d_y

  static DecoderParams init(const DecoderConfig& cfg, Rng& rng) {
    cfg.validate();
    DecoderParams p;
    p.cells.resize(cfg.n_layers);
    for (int li = 0; li < cfg.n_layers; ++li) {
      const int input_dim = (li == 0) ? cfg.d_y : cfg.d_s;
      const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_s));
      p.cells[li].w =
          Tensor::rand_uniform({input_dim + cfg.d_s, 4 * cfg.d_s}, rng, -bound, bound, true);
      p.cells[li].b = Tensor::zeros({1, 4 * cfg.d_s}, true);
      // forget-gate bias at 1 keeps early memory alive
      auto& bias = p.cells[li].b.mutable_values();
      for (int j = cfg.d_s; j < 2 * cfg.d_s; ++j) bias[j] = 1.0;
    }
    const double bound = std::sqrt(6.0 / (cfg.d_s + cfg.d_z + cfg.d_y));
    p.out_w = Tensor::rand_uniform({cfg.d_s + cfg.d_z, cfg.d_y}, rng, -bound, bound, true);
    p.out_b = Tensor::zeros({1, cfg.d_y}, true);
    return p;
  }

  void register_into(ParamSet& set, const std::string& prefix = "decoder") const {
    for (std::size_t li = 0; li < cells.size(); ++li) {
      set.add(prefix + ".cell" + std::to_string(li) + ".w", cells[li].w);
      set.add(prefix + ".cell" + std::to_string(li) + ".b", cells[li].b);
    }
    set.add(prefix + ".out_w", out_w);
    set.add(prefix + ".out_b", out_b);
  }
};

// Per-layer hidden and cell vectors (1 x d_s each).
struct DecoderState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
};

// Samples every hidden and cell vector i.i.d. standard normal.
inline DecoderState init_state(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  DecoderState state;
  state.h.reserve(cfg.n_layers);
  state.c.reserve(cfg.n_layers);
  for (int li = 0; li < cfg.n_layers; ++li) {
    state.h.push_back(Tensor::randn({1, cfg.d_s}, rng));
    state.c.push_back(Tensor::randn({1, cfg.d_s}, rng));
  }
  return state;
}

// One step of the stacked recurrence; prev_pose is 1 x d_y and z is 1 x d_z.
// Returns the new state and the predicted pose [h_top; z] * W^S + b.
inline std::pair<DecoderState, Tensor> decode_step(const DecoderState& state,
                                                   const Tensor& prev_pose, const Tensor& z,
                                                   const DecoderParams& params,
                                                   const DecoderConfig& cfg) {
  if (!prev_pose.all_finite() || !z.all_finite())
    throw NumericError("decode_step: non-finite input");
  if (prev_pose.cols() != cfg.d_y)
    throw ShapeError("decode_step: prev_pose width " + std::to_string(prev_pose.cols()) +
                     ", expected " + std::to_string(cfg.d_y));
  if (z.cols() != cfg.d_z)
    throw ShapeError("decode_step: z width " + std::to_string(z.cols()) + ", expected " +
                     std::to_string(cfg.d_z));
  DecoderState next;
  next.h.resize(cfg.n_layers);
  next.c.resize(cfg.n_layers);
  Tensor input = prev_pose;
  for (int li = 0; li < cfg.n_layers; ++li) {
    const auto& cell = params.cells[li];
    Tensor gates = add(matmul(concat_cols({input, state.h[li]}), cell.w), cell.b);
    Tensor gi = sigmoid(slice_cols(gates, 0, cfg.d_s));
    Tensor gf = sigmoid(slice_cols(gates, cfg.d_s, cfg.d_s));
    Tensor go = sigmoid(slice_cols(gates, 2 * cfg.d_s, cfg.d_s));
    Tensor gc = tanh_act(slice_cols(gates, 3 * cfg.d_s, cfg.d_s));
    next.c[li] = add(mul(gf, state.c[li]), mul(gi, gc));
    next.h[li] = mul(go, tanh_act(next.c[li]));
    input = next.h[li];
  }
  Tensor pose = add(matmul(concat_cols({next.h[cfg.n_layers - 1], z}), params.out_w), params.out_b);
  return {std::move(next), std::move(pose)};
}

// Free-running rollout: step 1 consumes the begin-of-pose y0, every later
// step consumes the model's own previous output. Deterministic given
// (params, Z, y0, seed).
inline Matrix generate(const Matrix& z_seq, const std::vector<double>& y0,
                       const DecoderParams& params, const DecoderConfig& cfg,
                       std::uint64_t seed) {
  NoGradGuard no_grad;
  if (static_cast<int>(y0.size()) != cfg.d_y)
    throw ShapeError("generate: y0 width " + std::to_string(y0.size()) + ", expected " +
                     std::to_string(cfg.d_y));
  auto z = Tensor::from_matrix(z_seq);
  if (!z.all_finite()) throw NumericError("generate: non-finite Z");
  const int n = z_seq.rows;
  DecoderState state = init_state(cfg, seed);
  Tensor prev = Tensor::row(y0);
  Matrix out(n, cfg.d_y);
  for (int i = 0; i < n; ++i) {
    auto [next, pose] = decode_step(state, prev, slice_rows(z, i, 1), params, cfg);
    std::copy(pose.values().begin(), pose.values().end(), out.row(i));
    state = std::move(next);
    prev = std::move(pose);
  }
  return out;
}

}  // namespace dancegen
