#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/tensor.hpp"

namespace dancegen {

// Ordered collection of named trainable tensors. Insertion order is the
// canonical order for optimizer state and checkpoint blobs.
class ParamSet {
 public:
  void add(const std::string& name, const Tensor& t) {
    for (const auto& [existing, _] : items_)
      if (existing == name) throw Error("ParamSet: duplicate parameter name '" + name + "'");
    items_.emplace_back(name, t);
  }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t count() const { return items_.size(); }

  Tensor& find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return t;
    throw Error("ParamSet: no parameter named '" + name + "'");
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

  // Global gradient norm over all parameters.
  double grad_norm() const {
    double acc = 0.0;
    for (const auto& [_, t] : items_)
      for (double g : t.grad()) acc += g * g;
    return std::sqrt(acc);
  }

  // Scales all gradients so the global norm does not exceed max_norm.
  void clip_grad_norm(double max_norm) {
    const double norm = grad_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const double factor = max_norm / norm;
    for (auto& [_, t] : items_) {
      auto& node = *t.node();
      node.ensure_grad();
      for (auto& g : node.grad) g *= factor;
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

}  // namespace dancegen
