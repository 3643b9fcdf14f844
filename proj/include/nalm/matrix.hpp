#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nalm {

/// Dense row-major matrix of doubles.
///
/// The storage length always equals rows()*cols(). All layers, noise
/// samples and gradients in the library are carried in this type.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + std::to_string(rows_) + "x" +
                                  std::to_string(cols_));
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
  }

  /// 1 x n matrix.
  static Matrix row(std::initializer_list<double> values) {
    return Matrix(1, values.size(), std::vector<double>(values));
  }
  static Matrix row(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
  }

  /// n x 1 matrix.
  static Matrix column(std::initializer_list<double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values));
  }
  static Matrix column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
  }

  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double at(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) throw std::out_of_range("Matrix::at");
    return (*this)(r, c);
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  /// Single-element value; throws unless the matrix is 1x1.
  double item() const {
    if (rows_ != 1 || cols_ != 1) throw std::logic_error("Matrix::item on non-scalar " + shape());
    return data_[0];
  }

  /// Reshape in place, keeping capacity. Contents are unspecified afterwards
  /// unless `fill` is used.
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.resize(rows * cols);
  }
  void resize(std::size_t rows, std::size_t cols, double fill) {
    resize(rows, cols);
    std::fill(data_.begin(), data_.end(), fill);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::string shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  Matrix col(std::size_t c) const {
    Matrix out(rows_, 1);
    for (std::size_t r = 0; r < rows_; ++r) out(r, 0) = (*this)(r, c);
    return out;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

/// out = a * b (out is resized). b is transposed into a scratch buffer so the
/// inner loop is a contiguous dot product with four partial sums.
inline void gemm_into(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t R = a.rows(), K = a.cols(), C = b.cols();
  thread_local std::vector<double> bt;
  bt.resize(K * C);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < C; ++j) bt[j * K + k] = b(k, j);
  out.resize(R, C);
  const double* ad = a.data().data();
  for (std::size_t i = 0; i < R; ++i) {
    const double* ar = ad + i * K;
    for (std::size_t j = 0; j < C; ++j) {
      const double* bc = bt.data() + j * K;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      std::size_t k = 0;
      for (; k + 4 <= K; k += 4) {
        s0 += ar[k] * bc[k];
        s1 += ar[k + 1] * bc[k + 1];
        s2 += ar[k + 2] * bc[k + 2];
        s3 += ar[k + 3] * bc[k + 3];
      }
      double s = (s0 + s1) + (s2 + s3);
      for (; k < K; ++k) s += ar[k] * bc[k];
      out(i, j) = s;
    }
  }
}

}  // namespace detail

/// Plain (untracked) matrix product.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + a.shape() + " * " + b.shape());
  }
  Matrix out;
  detail::gemm_into(a, b, out);
  return out;
}

/// Mean squared error between two equally shaped matrices.
inline double mse(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target)) {
    throw std::invalid_argument("mse: shape mismatch " + pred.shape() + " vs " + target.shape());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = target[i] - pred[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace nalm
