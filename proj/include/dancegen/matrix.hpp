#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dancegen/errors.hpp"

namespace dancegen {

// Plain row-major dense matrix of doubles. Used for data handling (pose and
// music frames, feature vectors); the autodiff Tensor wraps the same layout.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
  Matrix(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
    if (v.size() != static_cast<std::size_t>(r) * c)
      throw ShapeError("Matrix: data length " + std::to_string(v.size()) +
                       " does not match " + std::to_string(r) + "x" + std::to_string(c));
  }

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }

  std::vector<double> row_vec(int r) const {
    return std::vector<double>(row(r), row(r) + cols);
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool operator==(const Matrix& o) const {
    return rows == o.rows && cols == o.cols && v == o.v;
  }
};

inline Matrix hconcat(const std::vector<Matrix>& parts) {
  if (parts.empty()) throw ShapeError("hconcat: no parts");
  int total = 0;
  for (const auto& p : parts) {
    if (p.rows != parts[0].rows)
      throw ShapeError("hconcat: row count mismatch (" + std::to_string(p.rows) +
                       " vs " + std::to_string(parts[0].rows) + ")");
    total += p.cols;
  }
  Matrix out(parts[0].rows, total);
  for (int r = 0; r < out.rows; ++r) {
    int c0 = 0;
    for (const auto& p : parts) {
      for (int c = 0; c < p.cols; ++c) out.at(r, c0 + c) = p.at(r, c);
      c0 += p.cols;
    }
  }
  return out;
}

}  // namespace dancegen
