#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace metahpo {

// Dense row-major matrix of doubles. Vectors are 1 x n matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  // Same data, new shape; rows * cols must be unchanged.
  Matrix reshaped(std::size_t rows, std::size_t cols) const;
  // Rows [begin, begin + count).
  Matrix slice_rows(std::size_t begin, std::size_t count) const;
  // Columns [begin, begin + count).
  Matrix slice_cols(std::size_t begin, std::size_t count) const;
  void set_cols(std::size_t begin, const Matrix& block);
  void set_rows(std::size_t begin, const Matrix& block);

  void fill(double v);
  bool all_finite() const noexcept;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
// Adds a 1 x cols row vector to every row.
Matrix add_row_vector(Matrix a, const Matrix& row);
// 1 x cols vector of column sums.
Matrix column_sums(const Matrix& a);
// Horizontal concatenation.
Matrix hconcat(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);

enum class Activation { relu, elu, sigmoid, tanh, linear, softplus, softmax_rowwise };

Matrix activate(const Matrix& x, Activation kind);
// Gradient w.r.t. the pre-activation, given pre-activation x, output y and
// upstream gradient dy.
Matrix activate_backward(const Matrix& x, const Matrix& y, const Matrix& dy,
                         Activation kind);

// Per-vector normalization with affine gain/bias, variance epsilon 1e-5.
std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias, double eps = 1e-5);

}  // namespace metahpo
