#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "flake/error.hpp"

namespace flake {

/// Dense row-major matrix of 64-bit floats. Value type: copies are deep,
/// moves are cheap. An empty (0-row) matrix is legal so that zero-row
/// update payloads can be represented; numerical routines that need data
/// reject empty inputs themselves.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data size does not match rows*cols");
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged initializer rows");
      std::size_t j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  /// this * other, cache-friendly i-k-j loop order.
  Matrix operator*(const Matrix& other) const {
    if (cols_ != other.rows_) throw DimensionError("matmul: inner dimensions differ");
    Matrix out(rows_, other.cols_);
    const std::size_t n = other.cols_;
    for (std::size_t i = 0; i < rows_; ++i) {
      const double* a = data_.data() + i * cols_;
      double* o = out.data_.data() + i * n;
      for (std::size_t k = 0; k < cols_; ++k) {
        const double aik = a[k];
        if (aik == 0.0) continue;
        const double* b = other.data_.data() + k * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += aik * b[j];
      }
    }
    return out;
  }

  /// this * other^T; rows of both operands are dotted directly, which keeps
  /// the Gram-block hot path on contiguous memory.
  Matrix times_transposed(const Matrix& other) const {
    if (cols_ != other.cols_) throw DimensionError("A*B^T: column counts differ");
    Matrix out(rows_, other.rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
      const double* a = data_.data() + i * cols_;
      for (std::size_t j = 0; j < other.rows_; ++j) {
        const double* b = other.data_.data() + j * cols_;
        double acc = 0.0;
        for (std::size_t k = 0; k < cols_; ++k) acc += a[k] * b[k];
        out(i, j) = acc;
      }
    }
    return out;
  }

  Matrix operator+(const Matrix& other) const { return zipped(other, std::plus<>{}); }
  Matrix operator-(const Matrix& other) const { return zipped(other, std::minus<>{}); }

  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Matrix operator*(double s, Matrix m) {
    m *= s;
    return m;
  }

  Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    if (r0 + nr > rows_ || c0 + nc > cols_) throw DimensionError("block out of range");
    Matrix out(nr, nc);
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = 0; j < nc; ++j) out(i, j) = (*this)(r0 + i, c0 + j);
    return out;
  }

  void set_block(std::size_t r0, std::size_t c0, const Matrix& b) {
    if (r0 + b.rows() > rows_ || c0 + b.cols() > cols_) throw DimensionError("set_block out of range");
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) (*this)(r0 + i, c0 + j) = b(i, j);
  }

  double frobenius_norm() const {
    double acc = 0.0;
    for (double v : data_) acc += v * v;
    return std::sqrt(acc);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  double max_abs_diff(const Matrix& other) const {
    if (rows_ != other.rows_ || cols_ != other.cols_) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::abs(data_[i] - other.data_[i]));
    return m;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const Matrix& other) const = default;

 private:
  template <class Op>
  Matrix zipped(const Matrix& other, Op op) const {
    if (rows_ != other.rows_ || cols_ != other.cols_) throw DimensionError("elementwise op: shape mismatch");
    Matrix out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = op(data_[i], other.data_[i]);
    return out;
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// ||a - b||_F / ||b||_F, with an absolute fallback when b ~ 0.
inline double relative_frobenius_distance(const Matrix& a, const Matrix& b) {
  const double ref = b.frobenius_norm();
  const double diff = (a - b).frobenius_norm();
  return ref > 1e-300 ? diff / ref : diff;
}

}  // namespace flake
