#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cmzsl/errors.hpp"

namespace cmzsl {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. All training math runs in double
/// even where features are stored as f32 on disk.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double sqnorm(std::span<const double> a) { return dot(a, a); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// m * x + b, checking shapes.
inline Vector affine(const Matrix& m, std::span<const double> x,
                     std::span<const double> b) {
  if (x.size() != m.cols || b.size() != m.rows)
    throw ShapeError("affine: dimension mismatch");
  Vector out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) out[r] = b[r] + dot(m.row(r), x);
  return out;
}

/// acc += u * v^T
inline void add_outer(Matrix& acc, std::span<const double> u,
                      std::span<const double> v) {
  for (std::size_t r = 0; r < acc.rows; ++r) {
    double* dst = acc.data.data() + r * acc.cols;
    const double ur = u[r];
    for (std::size_t c = 0; c < acc.cols; ++c) dst[c] += ur * v[c];
  }
}

/// out = m^T * u  (m is RxC, u is R, result is C)
inline Vector matvec_t(const Matrix& m, std::span<const double> u) {
  Vector out(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) axpy(u[r], m.row(r), out);
  return out;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace cmzsl
