#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dancegen/decoder.hpp"
#include "dancegen/errors.hpp"
#include "dancegen/matrix.hpp"
#include "dancegen/tensor.hpp"

// Dynamic auto-condition scheduling: during training the decoder input
// alternates blocks of its own predictions (length p) with blocks of ground
// truth (length q), and p grows with the epoch count via a growth function.
// p = 0 degenerates to teacher forcing; a constant p is the static
// auto-condition baseline.

namespace dancegen {

enum class GrowthKind { constant, linear, quadratic, exponential, teacher_forcing };

inline std::string to_string(GrowthKind kind) {
  switch (kind) {
    case GrowthKind::constant: return "constant";
    case GrowthKind::linear: return "linear";
    case GrowthKind::quadratic: return "quadratic";
    case GrowthKind::exponential: return "exponential";
    case GrowthKind::teacher_forcing: return "teacher_forcing";
  }
  return "?";
}

inline GrowthKind growth_kind_from_string(const std::string& s) {
  if (s == "constant") return GrowthKind::constant;
  if (s == "linear") return GrowthKind::linear;
  if (s == "quadratic") return GrowthKind::quadratic;
  if (s == "exponential") return GrowthKind::exponential;
  if (s == "teacher_forcing") return GrowthKind::teacher_forcing;
  throw ConfigError("unknown curriculum kind '" + s + "'");
}

struct CurriculumSchedule {
  GrowthKind kind = GrowthKind::linear;
  double lambda = 0.01;
  int q = 10;
  int const_p = 0;  // used by kind=constant only

  void validate() const {
    if (lambda <= 0.0) throw ConfigError("curriculum: lambda must be positive");
    if (q < 1) throw ConfigError("curriculum: q must be >= 1");
    if (kind == GrowthKind::constant && const_p < 0)
      throw ConfigError("curriculum: const_p must be >= 0");
  }
};

// Predicted-block length after t completed epochs. Growth is clamped to a
// large sentinel well before floor() could overflow; callers cap at the
// sequence length anyway.
inline std::int64_t p_of_epoch(const CurriculumSchedule& schedule, std::int64_t t) {
  if (t < 0) throw Error("p_of_epoch: negative epoch " + std::to_string(t));
  schedule.validate();
  constexpr double kCap = 1e15;
  double raw = 0.0;
  switch (schedule.kind) {
    case GrowthKind::teacher_forcing:
      return 0;
    case GrowthKind::constant:
      return schedule.const_p;
    case GrowthKind::linear:
      raw = schedule.lambda * static_cast<double>(t);
      break;
    case GrowthKind::quadratic:
      raw = schedule.lambda * static_cast<double>(t) * static_cast<double>(t);
      break;
    case GrowthKind::exponential:
      raw = schedule.lambda * std::exp(static_cast<double>(t));
      break;
  }
  if (!(raw < kCap)) return static_cast<std::int64_t>(kCap);
  return static_cast<std::int64_t>(std::floor(raw));
}

enum class Feed : std::uint8_t { PRED, GT };

// Flags for steps 1..n: p predicted-fed steps, then q ground-truth-fed
// steps, repeating, truncated at n. p = 0 yields all-GT (teacher forcing).
inline std::vector<Feed> build_feed_mask(int n, std::int64_t p, int q) {
  if (n < 1) throw Error("build_feed_mask: n must be >= 1");
  if (p < 0) throw Error("build_feed_mask: p must be >= 0");
  if (q < 1) throw Error("build_feed_mask: q must be >= 1");
  std::vector<Feed> mask;
  mask.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(mask.size()) < n) {
    for (std::int64_t i = 0; i < p && static_cast<int>(mask.size()) < n; ++i)
      mask.push_back(Feed::PRED);
    for (int i = 0; i < q && static_cast<int>(mask.size()) < n; ++i) mask.push_back(Feed::GT);
  }
  return mask;
}

// One training rollout under a feed mask. Step 1 consumes y0; step i > 1
// consumes the model's previous output when mask[i-2] (the flag of step i-1)
// is PRED, and the ground-truth previous frame otherwise. Gradients flow
// through fed-back predictions unless detach_fed is set.
struct ScheduledRollout {
  Tensor outputs;                    // n x d_y, graph-connected
  std::vector<Feed> inputs_used;     // what fed each step (step 1 recorded as GT/y0)
};

inline ScheduledRollout scheduled_rollout(const Tensor& z_seq, const Matrix& y_gt,
                                          const std::vector<double>& y0,
                                          const DecoderParams& params, const DecoderConfig& cfg,
                                          const std::vector<Feed>& mask, std::uint64_t seed,
                                          bool detach_fed = false) {
  const int n = z_seq.rows();
  if (y_gt.rows != n || static_cast<int>(mask.size()) != n)
    throw ShapeError("scheduled_rollout: lengths differ (Z " + std::to_string(n) + ", Y " +
                     std::to_string(y_gt.rows) + ", mask " + std::to_string(mask.size()) + ")");
  if (y_gt.cols != cfg.d_y)
    throw ShapeError("scheduled_rollout: pose width " + std::to_string(y_gt.cols) +
                     ", expected " + std::to_string(cfg.d_y));

  DecoderState state = init_state(cfg, seed);
  ScheduledRollout result;
  result.inputs_used.reserve(static_cast<std::size_t>(n));
  std::vector<Tensor> outputs;
  outputs.reserve(static_cast<std::size_t>(n));
  Tensor prev = Tensor::row(y0);
  result.inputs_used.push_back(Feed::GT);
  for (int i = 0; i < n; ++i) {
    auto [next, pose] = decode_step(state, prev, slice_rows(z_seq, i, 1), params, cfg);
    outputs.push_back(pose);
    state = std::move(next);
    if (i + 1 < n) {
      if (mask[i] == Feed::PRED) {
        prev = detach_fed ? Tensor::from({1, cfg.d_y}, pose.values()) : pose;
        result.inputs_used.push_back(Feed::PRED);
      } else {
        prev = Tensor::row(y_gt.row_vec(i));
        result.inputs_used.push_back(Feed::GT);
      }
    }
  }
  result.outputs = concat_rows(outputs);
  return result;
}

}  // namespace dancegen
