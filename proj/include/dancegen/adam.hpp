#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/params.hpp"

namespace dancegen {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment accumulators follow the parameter order of the ParamSet they were
// initialized from; step count increases by exactly 1 per adam_step.
struct AdamState {
  AdamConfig cfg;
  std::int64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState init(const ParamSet& params, AdamConfig cfg = {}) {
    AdamState s;
    s.cfg = cfg;
    s.m.reserve(params.count());
    s.v.reserve(params.count());
    for (const auto& [_, p] : params.items()) {
      s.m.emplace_back(p.size(), 0.0);
      s.v.emplace_back(p.size(), 0.0);
    }
    return s;
  }
};

// One Adam update with bias correction, reading gradients accumulated on the
// parameter leaves. Throws NumericError naming the parameter on a non-finite
// gradient.
inline void adam_step(ParamSet& params, AdamState& state) {
  if (state.m.size() != params.count() || state.v.size() != params.count())
    throw Error("adam_step: state tracks " + std::to_string(state.m.size()) +
                " parameters, set has " + std::to_string(params.count()));
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.t));
  std::size_t idx = 0;
  for (auto& [name, p] : params.items()) {
    auto& node = *p.node();
    node.ensure_grad();
    auto& m = state.m[idx];
    auto& v = state.v[idx];
    if (m.size() != node.value.size())
      throw Error("adam_step: moment shape mismatch for parameter '" + name + "'");
    for (std::size_t i = 0; i < node.value.size(); ++i) {
      const double g = node.grad[i];
      if (!std::isfinite(g))
        throw NumericError("adam_step: non-finite gradient in parameter '" + name + "' at index " +
                           std::to_string(i));
      m[i] = state.cfg.beta1 * m[i] + (1.0 - state.cfg.beta1) * g;
      v[i] = state.cfg.beta2 * v[i] + (1.0 - state.cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      node.value[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
    ++idx;
  }
}

}  // namespace dancegen
