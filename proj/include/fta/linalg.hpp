#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fta/error.hpp"

namespace fta {

/// Dense 64-bit vector; also the representation of an embedding in R^d.
using Embedding = std::vector<double>;

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + " (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot product operands");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

inline bool all_finite(std::span<const double> a) {
  for (double x : a) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// y = M x
inline std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  require_same_dim(m.cols, x.size(), "matrix-vector product");
  std::vector<double> y(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

/// y = M^T x
inline std::vector<double> matvec_transposed(const Matrix& m, std::span<const double> x) {
  require_same_dim(m.rows, x.size(), "transposed matrix-vector product");
  std::vector<double> y(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) y[j] += r[j] * x[i];
  }
  return y;
}

/// a += scale * b
inline void axpy(double scale, std::span<const double> b, std::span<double> a) {
  require_same_dim(a.size(), b.size(), "axpy operands");
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += scale * b[k];
}

}  // namespace fta
