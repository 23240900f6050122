#include "rmgan/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rmgan/error.hpp"

extern "C" void openblas_set_num_threads(int);

namespace rmgan {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("Tensor: shape/data size mismatch");
  }
}

Tensor Tensor::zeros(std::initializer_list<std::size_t> shape) {
  return Tensor(std::vector<std::size_t>(shape));
}

Tensor Tensor::full(std::initializer_list<std::size_t> shape, double value) {
  Tensor t{std::vector<std::size_t>(shape)};
  t.fill(value);
  return t;
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw std::invalid_argument("Tensor::rows: not 2-D");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw std::invalid_argument("Tensor::cols: not 2-D");
  return shape_[1];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return data_[i * cols() + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return data_[i * cols() + j];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const std::string& site) const {
  if (!all_finite()) {
    throw NumericError("non-finite value produced at: " + site);
  }
}

Tensor& Tensor::operator+=(const Tensor& rhs) {
  if (!same_shape(rhs)) throw std::invalid_argument("Tensor +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& rhs) {
  if (!same_shape(rhs)) throw std::invalid_argument("Tensor -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void Tensor::add_scaled(const Tensor& rhs, double s) {
  if (!same_shape(rhs)) throw std::invalid_argument("Tensor::add_scaled: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * rhs.data_[i];
}

void Tensor::mul_inplace(const Tensor& rhs) {
  if (!same_shape(rhs)) throw std::invalid_argument("Tensor::mul_inplace: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] *= rhs.data_[i];
}

double Tensor::sum() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

double Tensor::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

double Tensor::frobenius_norm() const { return std::sqrt(squared_norm()); }

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

Tensor operator+(Tensor lhs, const Tensor& rhs) {
  lhs += rhs;
  return lhs;
}

Tensor operator-(Tensor lhs, const Tensor& rhs) {
  lhs -= rhs;
  return lhs;
}

Tensor operator*(Tensor lhs, double s) {
  lhs *= s;
  return lhs;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  out.mul_inplace(b);
  return out;
}

void gemm(bool trans_a, bool trans_b, double alpha, const Tensor& a,
          const Tensor& b, double beta, Tensor& c) {
  if (a.ndim() != 2 || b.ndim() != 2 || c.ndim() != 2) {
    throw std::invalid_argument("gemm: operands must be 2-D");
  }
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (k != kb || c.rows() != m || c.cols() != n) {
    throw std::invalid_argument("gemm: inner dimensions disagree: " +
                                shape_to_string(a.shape()) + (trans_a ? "^T" : "") + " x " +
                                shape_to_string(b.shape()) + (trans_b ? "^T" : "") + " -> " +
                                shape_to_string(c.shape()));
  }
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a.data(),
              static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()),
              beta, c.data(), static_cast<int>(c.cols()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c({std::vector<std::size_t>{a.rows(), b.cols()}});
  gemm(false, false, 1.0, a, b, 0.0, c);
  return c;
}

void add_row_broadcast(Tensor& y, const Tensor& b) {
  if (y.ndim() != 2 || b.size() != y.cols()) {
    throw std::invalid_argument("add_row_broadcast: shape mismatch");
  }
  const std::size_t r = y.rows(), c = y.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = y.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] += b[j];
  }
}

void accumulate_column_sums(const Tensor& m, Tensor& out) {
  if (m.ndim() != 2 || out.size() != m.cols()) {
    throw std::invalid_argument("accumulate_column_sums: shape mismatch");
  }
  const std::size_t r = m.rows(), c = m.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = m.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) out[j] += row[j];
  }
}

Tensor reshape(Tensor t, std::vector<std::size_t> new_shape) {
  std::size_t n = 1;
  for (std::size_t d : new_shape) n *= d;
  if (n != t.size()) throw std::invalid_argument("reshape: element count mismatch");
  std::vector<double> data(t.data(), t.data() + t.size());
  return Tensor(std::move(new_shape), std::move(data));
}

Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& rows) {
  const std::size_t d = src.cols();
  Tensor out{{rows.size(), d}};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= src.rows()) throw std::invalid_argument("gather_rows: index out of range");
    const double* s = src.data() + rows[k] * d;
    double* o = out.data() + k * d;
    for (std::size_t j = 0; j < d; ++j) o[j] = s[j];
  }
  return out;
}

void scatter_add_rows(const Tensor& grad, const std::vector<std::size_t>& rows,
                      Tensor& dst) {
  if (grad.rows() != rows.size() || grad.cols() != dst.cols()) {
    throw std::invalid_argument("scatter_add_rows: shape mismatch");
  }
  const std::size_t d = dst.cols();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= dst.rows()) throw std::invalid_argument("scatter_add_rows: index out of range");
    const double* g = grad.data() + k * d;
    double* o = dst.data() + rows[k] * d;
    for (std::size_t j = 0; j < d; ++j) o[j] += g[j];
  }
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void pin_blas_single_thread() { openblas_set_num_threads(1); }

}  // namespace rmgan
