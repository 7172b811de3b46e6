#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/matrix.hpp"

namespace dancegen {

// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
// Adequate for the covariance sizes this project sees (<= a few hundred).
struct SymmetricEigen {
  std::vector<double> values;  // unsorted
  Matrix vectors;              // columns are eigenvectors
};

inline SymmetricEigen symmetric_eigen(const Matrix& a, int max_sweeps = 64,
                                      double tol = 1e-13) {
  if (a.rows != a.cols) throw ShapeError("symmetric_eigen: matrix is not square");
  const int n = a.rows;
  Matrix m = a;
  Matrix v(n, n);
  for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;

  double norm = 0.0;
  for (double x : m.v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) norm = 1.0;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
    if (std::sqrt(2.0 * off) <= tol * norm) break;

    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = m.at(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        const double app = m.at(p, p);
        const double aqq = m.at(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double mip = m.at(i, p);
          const double miq = m.at(i, q);
          m.at(i, p) = c * mip - s * miq;
          m.at(i, q) = s * mip + c * miq;
        }
        for (int i = 0; i < n; ++i) {
          const double mpi = m.at(p, i);
          const double mqi = m.at(q, i);
          m.at(p, i) = c * mpi - s * mqi;
          m.at(q, i) = s * mpi + c * mqi;
        }
        for (int i = 0; i < n; ++i) {
          const double vip = v.at(i, p);
          const double viq = v.at(i, q);
          v.at(i, p) = c * vip - s * viq;
          v.at(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  SymmetricEigen result;
  result.values.resize(n);
  for (int i = 0; i < n; ++i) result.values[i] = m.at(i, i);
  result.vectors = std::move(v);
  return result;
}

inline Matrix mat_mul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("mat_mul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  return out;
}

// Symmetric PSD square root via eigendecomposition, negative eigenvalues
// clamped to zero.
inline Matrix psd_sqrt(const Matrix& a) {
  auto eig = symmetric_eigen(a);
  const int n = a.rows;
  Matrix scaled = eig.vectors;  // columns scaled by sqrt(lambda)
  for (int j = 0; j < n; ++j) {
    const double lam = std::max(0.0, eig.values[j]);
    const double root = std::sqrt(lam);
    for (int i = 0; i < n; ++i) scaled.at(i, j) *= root;
  }
  Matrix out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += scaled.at(i, k) * eig.vectors.at(j, k);
      out.at(i, j) = acc;
    }
  return out;
}

}  // namespace dancegen
