#include "metahpo/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "metahpo/errors.hpp"

namespace metahpo {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return ConstMap(m.data(), m.rows(), m.cols()); }
MutMap view(Matrix& m) { return MutMap(m.data(), m.rows(), m.cols()); }

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": " + shape(a) + " vs " + shape(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::reshaped(std::size_t rows, std::size_t cols) const {
  if (rows * cols != data_.size()) {
    throw ShapeError("cannot reshape " + shape(*this) + " to " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
  return Matrix(rows, cols, data_);
}

Matrix Matrix::slice_rows(std::size_t begin, std::size_t count) const {
  if (begin + count > rows_) throw ShapeError("row slice out of range");
  auto first = data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_);
  return Matrix(count, cols_,
                std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * cols_)));
}

Matrix Matrix::slice_cols(std::size_t begin, std::size_t count) const {
  if (begin + count > cols_) throw ShapeError("column slice out of range");
  Matrix out(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_ + begin), count,
                out.data_.begin() + static_cast<std::ptrdiff_t>(r * count));
  }
  return out;
}

void Matrix::set_cols(std::size_t begin, const Matrix& block) {
  if (block.rows_ != rows_ || begin + block.cols_ > cols_) {
    throw ShapeError("column block " + shape(block) + " does not fit " + shape(*this));
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    std::copy_n(block.data_.begin() + static_cast<std::ptrdiff_t>(r * block.cols_),
                block.cols_, data_.begin() + static_cast<std::ptrdiff_t>(r * cols_ + begin));
  }
}

void Matrix::set_rows(std::size_t begin, const Matrix& block) {
  if (block.cols_ != cols_ || begin + block.rows_ > rows_) {
    throw ShapeError("row block " + shape(block) + " does not fit " + shape(*this));
  }
  std::copy(block.data_.begin(), block.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape(a) + " * " + shape(b));
  Matrix out(a.rows(), b.cols());
  if (out.empty() || a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: " + shape(a) + "^T * " + shape(b));
  Matrix out(a.cols(), b.cols());
  if (out.empty() || a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: " + shape(a) + " * " + shape(b) + "^T");
  Matrix out(a.rows(), b.rows());
  if (out.empty() || a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Matrix add_row_vector(Matrix a, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row_vector: " + shape(a) + " + " + shape(row));
  }
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = a.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += row[c];
  }
  return a;
}

Matrix column_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) out[c] += src[c];
  }
  return out;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("hconcat: " + shape(a) + " | " + shape(b));
  Matrix out(a.rows(), a.cols() + b.cols());
  out.set_cols(0, a);
  out.set_cols(a.cols(), b);
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

namespace {

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }

}  // namespace

Matrix activate(const Matrix& x, Activation kind) {
  Matrix y = x;
  switch (kind) {
    case Activation::relu:
      for (double& v : y.values()) v = v > 0 ? v : 0.0;
      break;
    case Activation::elu:
      for (double& v : y.values()) v = v > 0 ? v : std::expm1(v);
      break;
    case Activation::sigmoid:
      for (double& v : y.values()) v = sigmoid(v);
      break;
    case Activation::tanh:
      for (double& v : y.values()) v = std::tanh(v);
      break;
    case Activation::linear:
      break;
    case Activation::softplus:
      for (double& v : y.values()) v = softplus(v);
      break;
    case Activation::softmax_rowwise:
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double& v : row) {
          v = std::exp(v - peak);
          total += v;
        }
        for (double& v : row) v /= total;
      }
      break;
  }
  return y;
}

Matrix activate_backward(const Matrix& x, const Matrix& y, const Matrix& dy,
                         Activation kind) {
  require_same_shape(x, dy, "activate_backward");
  Matrix dx = dy;
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0 ? dy[i] : 0.0;
      break;
    case Activation::elu:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0 ? dy[i] : dy[i] * (y[i] + 1.0);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
      break;
    case Activation::linear:
      break;
    case Activation::softplus:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * sigmoid(x[i]);
      break;
    case Activation::softmax_rowwise:
      for (std::size_t r = 0; r < dx.rows(); ++r) {
        auto yr = y.row(r);
        auto gr = dy.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
        auto out = dx.row(r);
        for (std::size_t c = 0; c < yr.size(); ++c) out[c] = yr[c] * (gr[c] - dot);
      }
      break;
  }
  return dx;
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias, double eps) {
  if (gain.size() != x.size() || bias.size() != x.size()) {
    throw ShapeError("layer_norm: gain/bias width mismatch");
  }
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

}  // namespace metahpo
