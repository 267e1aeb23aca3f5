#pragma once

// Dense row-major matrices and flat parameter vectors.
//
// Everything here is 64-bit floating point. Matrices are small enough at
// desk scale that the naive triple loop in matmul is adequate.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedsophia {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  /// Copies the listed rows, in order, into a new matrix.
  DenseMatrix gather_rows(std::span<const std::size_t> indices) const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Flat vector holding every parameter of a model (or a quantity of the same
/// shape: gradients, moment estimates, Hessian diagonals).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  explicit ParamVector(std::vector<double> data) : data_(std::move(data)) {}
  ParamVector(std::initializer_list<double> values) : data_(values) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& vector() const noexcept { return data_; }

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> data_;
};

enum class ElementwiseOp { kAdd, kSub, kMul, kDiv, kMaxScalar, kScale };

/// Standard matrix product. Throws ShapeError when a.cols != b.rows.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix transpose(const DenseMatrix& a);

/// Vector-vector form of elementwise(); kMaxScalar and kScale are rejected.
ParamVector elementwise(ElementwiseOp op, const ParamVector& a, const ParamVector& b);
/// Vector-scalar form; the scalar is broadcast for every op.
ParamVector elementwise(ElementwiseOp op, const ParamVector& a, double b);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector mul(const ParamVector& a, const ParamVector& b);
/// Throws DomainError when any divisor entry is exactly zero.
ParamVector div(const ParamVector& a, const ParamVector& b);
ParamVector max_scalar(const ParamVector& a, double floor);
ParamVector scale(const ParamVector& a, double factor);

/// y += alpha * x
void axpy(double alpha, const ParamVector& x, ParamVector& y);

double dot(const ParamVector& a, const ParamVector& b);
double norm_inf(const ParamVector& a);
double norm2(const ParamVector& a);

/// Numerically stable softmax over each row (max is subtracted first).
/// Throws DomainError on non-finite input.
DenseMatrix row_softmax(const DenseMatrix& logits);

bool all_finite(std::span<const double> values);

}  // namespace fedsophia
