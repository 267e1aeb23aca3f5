#include "fedsophia/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsophia/errors.hpp"

namespace fedsophia {

namespace {

void require_same_length(const ParamVector& a, const ParamVector& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) +
                     " != rows*cols " + std::to_string(rows_ * cols_));
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("DenseMatrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::gather_rows(std::span<const std::size_t> indices) const {
  DenseMatrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  DenseMatrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

ParamVector elementwise(ElementwiseOp op, const ParamVector& a, const ParamVector& b) {
  require_same_length(a, b, "elementwise");
  ParamVector out(a.size());
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
      break;
    case ElementwiseOp::kMul:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
      break;
    case ElementwiseOp::kDiv:
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (b[i] == 0.0) {
          throw DomainError("div: zero divisor at index " + std::to_string(i));
        }
        out[i] = a[i] / b[i];
      }
      break;
    case ElementwiseOp::kMaxScalar:
    case ElementwiseOp::kScale:
      throw ShapeError("elementwise: operation takes a scalar operand");
  }
  return out;
}

ParamVector elementwise(ElementwiseOp op, const ParamVector& a, double b) {
  ParamVector out(a.size());
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b;
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b;
      break;
    case ElementwiseOp::kMul:
    case ElementwiseOp::kScale:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b;
      break;
    case ElementwiseOp::kDiv:
      if (b == 0.0) throw DomainError("div: zero scalar divisor");
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / b;
      break;
    case ElementwiseOp::kMaxScalar:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b);
      break;
  }
  return out;
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
  return elementwise(ElementwiseOp::kAdd, a, b);
}
ParamVector sub(const ParamVector& a, const ParamVector& b) {
  return elementwise(ElementwiseOp::kSub, a, b);
}
ParamVector mul(const ParamVector& a, const ParamVector& b) {
  return elementwise(ElementwiseOp::kMul, a, b);
}
ParamVector div(const ParamVector& a, const ParamVector& b) {
  return elementwise(ElementwiseOp::kDiv, a, b);
}
ParamVector max_scalar(const ParamVector& a, double floor) {
  return elementwise(ElementwiseOp::kMaxScalar, a, floor);
}
ParamVector scale(const ParamVector& a, double factor) {
  return elementwise(ElementwiseOp::kScale, a, factor);
}

void axpy(double alpha, const ParamVector& x, ParamVector& y) {
  require_same_length(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_length(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_inf(const ParamVector& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double norm2(const ParamVector& a) { return std::sqrt(dot(a, a)); }

DenseMatrix row_softmax(const DenseMatrix& logits) {
  if (!all_finite(logits.values())) throw DomainError("row_softmax: non-finite logits");
  DenseMatrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto dst = out.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - peak);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace fedsophia
