#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/matrix.hpp"
#include "dancegen/rng.hpp"

// Minimal dense-tensor engine with reverse-mode automatic differentiation.
// Tensors are handles to graph nodes; creation order is a valid topological
// order of the tape, so backward() just replays nodes newest-first. All math
// is in 64-bit floats and there is no broadcasting: operand shapes must
// conform exactly, and reshape/tile are explicit ops.

namespace dancegen {

namespace autograd {

struct Node;
using NodePtr = std::shared_ptr<Node>;

inline std::atomic<std::uint64_t>& node_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

// Thread-local switch: while off, ops compute values but record no tape.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
  std::vector<double> aux;              // op-specific saved context (e.g. attention weights)

  Node() : seq(node_counter().fetch_add(1, std::memory_order_relaxed)) {}

  // Iterative teardown: long op chains (one node per rollout step) would
  // otherwise recurse through shared_ptr destructors and overflow the stack.
  ~Node() {
    std::vector<NodePtr> work(std::make_move_iterator(parents.begin()),
                              std::make_move_iterator(parents.end()));
    parents.clear();
    while (!work.empty()) {
      NodePtr p = std::move(work.back());
      work.pop_back();
      if (p && p.use_count() == 1) {
        for (auto& gp : p->parents) work.push_back(std::move(gp));
        p->parents.clear();
      }
    }
  }

  std::size_t size() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace autograd

// RAII guard that disables tape recording on the current thread.
struct NoGradGuard {
  NoGradGuard() : previous_(autograd::grad_mode()) { autograd::grad_mode() = false; }
  ~NoGradGuard() { autograd::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return make(std::move(shape), {}, requires_grad, /*fill=*/0.0);
  }

  static Tensor from(std::vector<int> shape, std::vector<double> data,
                     bool requires_grad = false) {
    std::size_t n = 1;
    for (int d : shape) n *= check_dim(d);
    if (data.size() != n)
      throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                       " does not match shape product " + std::to_string(n));
    auto node = std::make_shared<autograd::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from_matrix(const Matrix& m, bool requires_grad = false) {
    return from({m.rows, m.cols}, m.v, requires_grad);
  }

  static Tensor scalar(double v) { return from({1, 1}, {v}); }

  static Tensor row(std::vector<double> data, bool requires_grad = false) {
    const int n = static_cast<int>(data.size());
    return from({1, n}, std::move(data), requires_grad);
  }

  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false) {
    std::size_t n = 1;
    for (int d : shape) n *= check_dim(d);
    std::vector<double> data(n);
    for (auto& x : data) x = rng.normal(0.0, stddev);
    return from(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor rand_uniform(std::vector<int> shape, Rng& rng, double lo, double hi,
                             bool requires_grad = false) {
    std::size_t n = 1;
    for (int d : shape) n *= check_dim(d);
    std::vector<double> data(n);
    for (auto& x : data) x = rng.uniform(lo, hi);
    return from(std::move(shape), std::move(data), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  // 2-D accessors; most of the model works in matrices.
  int rows() const { return dim2().first; }
  int cols() const { return dim2().second; }

  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& mutable_values() { return node_->value; }

  double at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * cols() + c]; }

  double scalar_value() const {
    if (size() != 1) throw ShapeError("scalar_value: tensor has " + std::to_string(size()) + " elements");
    return node_->value[0];
  }

  const std::vector<double>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  Matrix to_matrix() const {
    auto [r, c] = dim2();
    return Matrix(r, c, node_->value);
  }

  bool all_finite() const {
    for (double x : node_->value)
      if (!std::isfinite(x)) return false;
    return true;
  }

  autograd::NodePtr node() const { return node_; }
  explicit Tensor(autograd::NodePtr node) : node_(std::move(node)) {}

 private:
  static std::size_t check_dim(int d) {
    if (d <= 0) throw ShapeError("Tensor: non-positive dimension " + std::to_string(d));
    return static_cast<std::size_t>(d);
  }

  static Tensor make(std::vector<int> shape, std::vector<double> data, bool requires_grad,
                     double fill) {
    std::size_t n = 1;
    for (int d : shape) n *= check_dim(d);
    auto node = std::make_shared<autograd::Node>();
    node->shape = std::move(shape);
    node->value = data.empty() ? std::vector<double>(n, fill) : std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  std::pair<int, int> dim2() const {
    const auto& s = node_->shape;
    if (s.size() == 1) return {1, s[0]};
    if (s.size() == 2) return {s[0], s[1]};
    throw ShapeError("expected a 1-D or 2-D tensor, got rank " + std::to_string(s.size()));
  }

  autograd::NodePtr node_;
};

namespace detail {

inline std::string shape_str(const Tensor& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape()[i]);
  }
  return s + ")";
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Builds the result node for an op, recording tape info only when grad mode
// is on and some input needs gradients.
inline Tensor make_op(std::vector<int> shape, std::vector<double> value,
                      std::vector<Tensor> inputs,
                      std::function<void(autograd::Node&)> backprop,
                      std::vector<double> aux = {}) {
  auto node = std::make_shared<autograd::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (autograd::grad_mode()) {
    for (const auto& in : inputs)
      if (in.requires_grad()) {
        needs = true;
        break;
      }
  }
  node->requires_grad = needs;
  if (needs) {
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backprop = std::move(backprop);
    node->aux = std::move(aux);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](autograd::Node& n) {
    for (int p = 0; p < 2; ++p) {
      auto& par = *n.parents[p];
      if (!par.requires_grad) continue;
      par.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) par.grad[i] += n.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](autograd::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return detail::make_op(a.shape(), std::move(out), {a}, [s](autograd::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += s * n.grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](autograd::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

namespace detail {

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* /*name*/, const Tensor& a, Fwd fwd, Bwd bwd) {
  std::vector<double> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return make_op(a.shape(), std::move(out), {a}, [bwd](autograd::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      pa.grad[i] += n.grad[i] * bwd(pa.value[i], n.value[i]);
  });
}

}  // namespace detail

inline Tensor relu(const Tensor& a) {
  return detail::unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_op(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh_act(const Tensor& a) {
  return detail::unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor log_op(const Tensor& a) {
  return detail::unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), p = a.cols(), p2 = b.rows(), q = b.cols();
  if (p != p2)
    throw ShapeError("matmul: inner dimensions differ, " + detail::shape_str(a) + " * " +
                     detail::shape_str(b));
  std::vector<double> out(static_cast<std::size_t>(m) * q, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i) {
    const double* arow = av.data() + static_cast<std::size_t>(i) * p;
    double* orow = out.data() + static_cast<std::size_t>(i) * q;
    for (int k = 0; k < p; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = bv.data() + static_cast<std::size_t>(k) * q;
      for (int j = 0; j < q; ++j) orow[j] += aik * brow[j];
    }
  }
  return detail::make_op({m, q}, std::move(out), {a, b}, [m, p, q](autograd::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = dC * B^T
      for (int i = 0; i < m; ++i) {
        const double* grow = n.grad.data() + static_cast<std::size_t>(i) * q;
        double* garow = pa.grad.data() + static_cast<std::size_t>(i) * p;
        for (int k = 0; k < p; ++k) {
          const double* brow = pb.value.data() + static_cast<std::size_t>(k) * q;
          double acc = 0.0;
          for (int j = 0; j < q; ++j) acc += grow[j] * brow[j];
          garow[k] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = A^T * dC
      for (int i = 0; i < m; ++i) {
        const double* arow = pa.value.data() + static_cast<std::size_t>(i) * p;
        const double* grow = n.grad.data() + static_cast<std::size_t>(i) * q;
        for (int k = 0; k < p; ++k) {
          const double aik = arow[k];
          if (aik == 0.0) continue;
          double* gbrow = pb.grad.data() + static_cast<std::size_t>(k) * q;
          for (int j = 0; j < q; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  const int m = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  const auto& av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * c + j];
  return detail::make_op({c, m}, std::move(out), {a}, [m, c](autograd::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < m; ++i)
        pa.grad[static_cast<std::size_t>(i) * c + j] += n.grad[static_cast<std::size_t>(j) * m + i];
  });
}

// Concatenate along the last (column) dimension; all-but-last dims must agree.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int m = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m)
      throw ShapeError("concat_cols: row count mismatch " + detail::shape_str(parts[0]) +
                       " vs " + detail::shape_str(p));
    total += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(m) * total);
  std::vector<int> widths(parts.size());
  int c0 = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const int w = parts[k].cols();
    widths[k] = w;
    const auto& pv = parts[k].values();
    for (int i = 0; i < m; ++i)
      std::copy_n(pv.data() + static_cast<std::size_t>(i) * w, w,
                  out.data() + static_cast<std::size_t>(i) * total + c0);
    c0 += w;
  }
  return detail::make_op({m, total}, std::move(out), parts,
                         [m, total, widths](autograd::Node& n) {
                           int off = 0;
                           for (std::size_t k = 0; k < n.parents.size(); ++k) {
                             auto& par = *n.parents[k];
                             const int w = widths[k];
                             if (par.requires_grad) {
                               par.ensure_grad();
                               for (int i = 0; i < m; ++i)
                                 for (int j = 0; j < w; ++j)
                                   par.grad[static_cast<std::size_t>(i) * w + j] +=
                                       n.grad[static_cast<std::size_t>(i) * total + off + j];
                             }
                             off += w;
                           }
                         });
}

// Stack row blocks vertically; all parts must share the column count.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int c = parts[0].cols();
  int total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw ShapeError("concat_rows: column count mismatch " + detail::shape_str(parts[0]) +
                       " vs " + detail::shape_str(p));
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total) * c);
  std::vector<int> heights(parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    heights[k] = parts[k].rows();
    const auto& pv = parts[k].values();
    out.insert(out.end(), pv.begin(), pv.end());
  }
  return detail::make_op({total, c}, std::move(out), parts, [c, heights](autograd::Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      auto& par = *n.parents[k];
      const std::size_t count = static_cast<std::size_t>(heights[k]) * c;
      if (par.requires_grad) {
        par.ensure_grad();
        for (std::size_t i = 0; i < count; ++i) par.grad[i] += n.grad[off + i];
      }
      off += count;
    }
  });
}

inline Tensor slice_rows(const Tensor& a, int row0, int nrows) {
  const int m = a.rows(), c = a.cols();
  if (row0 < 0 || nrows <= 0 || row0 + nrows > m)
    throw ShapeError("slice_rows: range [" + std::to_string(row0) + ", " +
                     std::to_string(row0 + nrows) + ") outside " + detail::shape_str(a));
  const auto& av = a.values();
  std::vector<double> out(av.begin() + static_cast<std::size_t>(row0) * c,
                          av.begin() + static_cast<std::size_t>(row0 + nrows) * c);
  return detail::make_op({nrows, c}, std::move(out), {a}, [row0, c](autograd::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const std::size_t off = static_cast<std::size_t>(row0) * c;
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[off + i] += n.grad[i];
  });
}

inline Tensor slice_cols(const Tensor& a, int col0, int ncols) {
  const int m = a.rows(), c = a.cols();
  if (col0 < 0 || ncols <= 0 || col0 + ncols > c)
    throw ShapeError("slice_cols: range [" + std::to_string(col0) + ", " +
                     std::to_string(col0 + ncols) + ") outside " + detail::shape_str(a));
  std::vector<double> out(static_cast<std::size_t>(m) * ncols);
  const auto& av = a.values();
  for (int i = 0; i < m; ++i)
    std::copy_n(av.data() + static_cast<std::size_t>(i) * c + col0, ncols,
                out.data() + static_cast<std::size_t>(i) * ncols);
  return detail::make_op({m, ncols}, std::move(out), {a}, [m, c, col0, ncols](autograd::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < ncols; ++j)
        pa.grad[static_cast<std::size_t>(i) * c + col0 + j] +=
            n.grad[static_cast<std::size_t>(i) * ncols + j];
  });
}

// Repeat a 1xD row n times (the explicit substitute for broadcasting).
inline Tensor tile_rows(const Tensor& rowvec, int n) {
  if (rowvec.rows() != 1)
    throw ShapeError("tile_rows: expected a 1-row tensor, got " + detail::shape_str(rowvec));
  if (n <= 0) throw ShapeError("tile_rows: non-positive count " + std::to_string(n));
  const int c = rowvec.cols();
  std::vector<double> out(static_cast<std::size_t>(n) * c);
  const auto& rv = rowvec.values();
  for (int i = 0; i < n; ++i) std::copy_n(rv.data(), c, out.data() + static_cast<std::size_t>(i) * c);
  return detail::make_op({n, c}, std::move(out), {rowvec}, [n, c](autograd::Node& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) pa.grad[j] += node.grad[static_cast<std::size_t>(i) * c + j];
  });
}

// Column-wise mean over rows: (n x d) -> (1 x d).
inline Tensor mean_rows(const Tensor& a) {
  const int m = a.rows(), c = a.cols();
  std::vector<double> out(c, 0.0);
  const auto& av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j) out[j] += av[static_cast<std::size_t>(i) * c + j];
  for (int j = 0; j < c; ++j) out[j] /= m;
  return detail::make_op({1, c}, std::move(out), {a}, [m, c](autograd::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < c; ++j)
        pa.grad[static_cast<std::size_t>(i) * c + j] += n.grad[j] / m;
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return detail::make_op({1, 1}, {s}, {a}, [](autograd::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const double g = n.grad[0];
    for (auto& x : pa.grad) x += g;
  });
}

// Sum of absolute values (the l1 building block). Subgradient 0 at exactly 0.
inline Tensor abs_sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += std::fabs(x);
  return detail::make_op({1, 1}, {s}, {a}, [](autograd::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const double g = n.grad[0];
    for (std::size_t i = 0; i < pa.value.size(); ++i) {
      const double x = pa.value[i];
      pa.grad[i] += g * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
    }
  });
}

// ---------------------------------------------------------------------------
// Softmax and normalization
// ---------------------------------------------------------------------------

namespace detail {

// Numerically stable softmax of src[0..len) into dst[0..len).
inline void softmax_span(const double* src, double* dst, int len) {
  double mx = src[0];
  for (int i = 1; i < len; ++i) mx = std::max(mx, src[i]);
  double z = 0.0;
  for (int i = 0; i < len; ++i) {
    dst[i] = std::exp(src[i] - mx);
    z += dst[i];
  }
  for (int i = 0; i < len; ++i) dst[i] /= z;
}

}  // namespace detail

inline Tensor softmax_rows(const Tensor& a) {
  const int m = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  const auto& av = a.values();
  for (int i = 0; i < m; ++i)
    detail::softmax_span(av.data() + static_cast<std::size_t>(i) * c,
                         out.data() + static_cast<std::size_t>(i) * c, c);
  return detail::make_op(a.shape(), std::move(out), {a}, [m, c](autograd::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (int i = 0; i < m; ++i) {
      const double* y = n.value.data() + static_cast<std::size_t>(i) * c;
      const double* g = n.grad.data() + static_cast<std::size_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += y[j] * g[j];
      double* gx = pa.grad.data() + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j) gx[j] += y[j] * (g[j] - dot);
    }
  });
}

// Per-row layer normalization with learnable gain and bias (both 1 x d).
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                              double eps = 1e-5) {
  const int m = x.rows(), c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c)
    throw ShapeError("layer_norm_rows: gain/bias must be 1x" + std::to_string(c));
  std::vector<double> out(x.size());
  std::vector<double> aux(static_cast<std::size_t>(m) * (c + 1));  // xhat rows + 1/sigma per row
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (int i = 0; i < m; ++i) {
    const double* xr = xv.data() + static_cast<std::size_t>(i) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += xr[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= c;
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    double* xhat = aux.data() + static_cast<std::size_t>(i) * (c + 1);
    for (int j = 0; j < c; ++j) {
      xhat[j] = (xr[j] - mean) * inv_sigma;
      out[static_cast<std::size_t>(i) * c + j] = xhat[j] * gv[j] + bv[j];
    }
    xhat[c] = inv_sigma;
  }
  return detail::make_op(x.shape(), std::move(out), {x, gain, bias},
                         [m, c](autograd::Node& n) {
                           auto& px = *n.parents[0];
                           auto& pg = *n.parents[1];
                           auto& pb = *n.parents[2];
                           if (px.requires_grad) px.ensure_grad();
                           if (pg.requires_grad) pg.ensure_grad();
                           if (pb.requires_grad) pb.ensure_grad();
                           for (int i = 0; i < m; ++i) {
                             const double* xhat = n.aux.data() + static_cast<std::size_t>(i) * (c + 1);
                             const double inv_sigma = xhat[c];
                             const double* g = n.grad.data() + static_cast<std::size_t>(i) * c;
                             if (pg.requires_grad)
                               for (int j = 0; j < c; ++j) pg.grad[j] += g[j] * xhat[j];
                             if (pb.requires_grad)
                               for (int j = 0; j < c; ++j) pb.grad[j] += g[j];
                             if (px.requires_grad) {
                               double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                               for (int j = 0; j < c; ++j) {
                                 const double dxhat = g[j] * pg.value[j];
                                 mean_dxhat += dxhat;
                                 mean_dxhat_xhat += dxhat * xhat[j];
                               }
                               mean_dxhat /= c;
                               mean_dxhat_xhat /= c;
                               double* gx = px.grad.data() + static_cast<std::size_t>(i) * c;
                               for (int j = 0; j < c; ++j) {
                                 const double dxhat = g[j] * pg.value[j];
                                 gx[j] += inv_sigma * (dxhat - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                               }
                             }
                           }
                         },
                         std::move(aux));
}

// ---------------------------------------------------------------------------
// Windowed (local) scaled dot-product attention
// ---------------------------------------------------------------------------

namespace detail {

// Shared forward core; writes the output and the banded weight matrix
// (band width 2*floor(k/2)+1, entries outside each row's window left at 0).
// Returns the number of (i, j) score pairs actually computed.
inline std::size_t windowed_attention_core(const double* q, const double* kmat, const double* v,
                                           int n, int dk, int dv, int window, double* out,
                                           double* band) {
  const int half = window / 2;
  const int bw = 2 * half + 1;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> scores(bw);
  std::size_t pairs = 0;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    const int len = hi - lo + 1;
    pairs += static_cast<std::size_t>(len);
    const double* qi = q + static_cast<std::size_t>(i) * dk;
    for (int t = lo; t <= hi; ++t) {
      const double* kt = kmat + static_cast<std::size_t>(t) * dk;
      double e = 0.0;
      for (int d = 0; d < dk; ++d) e += qi[d] * kt[d];
      scores[t - lo] = e * inv_sqrt_dk;
    }
    softmax_span(scores.data(), scores.data(), len);
    double* orow = out + static_cast<std::size_t>(i) * dv;
    std::fill_n(orow, dv, 0.0);
    double* brow = band + static_cast<std::size_t>(i) * bw;
    for (int t = lo; t <= hi; ++t) {
      const double alpha = scores[t - lo];
      brow[t - (i - half)] = alpha;
      const double* vt = v + static_cast<std::size_t>(t) * dv;
      for (int d = 0; d < dv; ++d) orow[d] += alpha * vt[d];
    }
  }
  return pairs;
}

}  // namespace detail

// Attention restricted to each row's k-neighborhood. Q, K are n x d_k and V is
// n x d_v; row i attends to rows [i - floor(k/2), i + floor(k/2)] clipped to
// the sequence, with the softmax renormalized over the surviving entries.
inline Tensor windowed_attention(const Tensor& q, const Tensor& k, const Tensor& v, int window) {
  const int n = q.rows(), dk = q.cols(), dv = v.cols();
  if (k.rows() != n || k.cols() != dk || v.rows() != n)
    throw ShapeError("windowed_attention: Q " + detail::shape_str(q) + ", K " +
                     detail::shape_str(k) + ", V " + detail::shape_str(v) + " do not conform");
  if (window < 1) throw ShapeError("windowed_attention: window must be >= 1");
  const int half = window / 2;
  const int bw = 2 * half + 1;
  std::vector<double> out(static_cast<std::size_t>(n) * dv);
  std::vector<double> band(static_cast<std::size_t>(n) * bw, 0.0);
  detail::windowed_attention_core(q.values().data(), k.values().data(), v.values().data(), n, dk,
                                  dv, window, out.data(), band.data());
  return detail::make_op(
      {n, dv}, std::move(out), {q, k, v},
      [n, dk, dv, half, bw](autograd::Node& node) {
        auto& pq = *node.parents[0];
        auto& pk = *node.parents[1];
        auto& pv = *node.parents[2];
        if (pq.requires_grad) pq.ensure_grad();
        if (pk.requires_grad) pk.ensure_grad();
        if (pv.requires_grad) pv.ensure_grad();
        const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
        std::vector<double> dalpha(bw), descore(bw);
        for (int i = 0; i < n; ++i) {
          const int lo = std::max(0, i - half);
          const int hi = std::min(n - 1, i + half);
          const double* brow = node.aux.data() + static_cast<std::size_t>(i) * bw;
          const double* grow = node.grad.data() + static_cast<std::size_t>(i) * dv;
          // d alpha_it = g_i . v_t ; softmax backward within the window
          double dot = 0.0;
          for (int t = lo; t <= hi; ++t) {
            const double* vt = pv.value.data() + static_cast<std::size_t>(t) * dv;
            double da = 0.0;
            for (int d = 0; d < dv; ++d) da += grow[d] * vt[d];
            dalpha[t - lo] = da;
            dot += brow[t - (i - half)] * da;
          }
          for (int t = lo; t <= hi; ++t)
            descore[t - lo] = brow[t - (i - half)] * (dalpha[t - lo] - dot);
          const double* qi = pq.value.data() + static_cast<std::size_t>(i) * dk;
          for (int t = lo; t <= hi; ++t) {
            const double ds = descore[t - lo] * inv_sqrt_dk;
            const double alpha = brow[t - (i - half)];
            const double* kt = pk.value.data() + static_cast<std::size_t>(t) * dk;
            if (pq.requires_grad) {
              double* gq = pq.grad.data() + static_cast<std::size_t>(i) * dk;
              for (int d = 0; d < dk; ++d) gq[d] += ds * kt[d];
            }
            if (pk.requires_grad) {
              double* gk = pk.grad.data() + static_cast<std::size_t>(t) * dk;
              for (int d = 0; d < dk; ++d) gk[d] += ds * qi[d];
            }
            if (pv.requires_grad) {
              double* gv = pv.grad.data() + static_cast<std::size_t>(t) * dv;
              for (int d = 0; d < dv; ++d) gv[d] += alpha * grow[d];
            }
          }
        }
      },
      std::move(band));
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got " + detail::shape_str(loss));
  autograd::Node* root = loss.node().get();
  if (!root->requires_grad) return;  // nothing on the tape depends on a leaf

  // Reachable grad-requiring nodes; creation order is a topological order.
  std::vector<autograd::Node*> nodes;
  std::unordered_set<const autograd::Node*> seen{root};
  std::vector<autograd::Node*> stack{root};
  while (!stack.empty()) {
    autograd::Node* cur = stack.back();
    stack.pop_back();
    nodes.push_back(cur);
    for (const auto& p : cur->parents) {
      autograd::Node* parent = p.get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back(parent);
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const autograd::Node* a, const autograd::Node* b) { return a->seq > b->seq; });

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (autograd::Node* node : nodes) {
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
}

}  // namespace dancegen
