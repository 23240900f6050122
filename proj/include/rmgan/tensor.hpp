#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace rmgan {

/// Dense n-dimensional array of doubles, row-major.
///
/// Shapes are explicit; every operation that combines tensors validates
/// shapes and throws std::invalid_argument on mismatch. Values are plain
/// doubles; finiteness is a checkable property (all_finite), not a silent
/// assumption.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::initializer_list<std::size_t> shape);
  static Tensor full(std::initializer_list<std::size_t> shape, double value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors; rows()/cols() require ndim() == 2.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;

  void fill(double v);
  void zero() { fill(0.0); }

  bool all_finite() const;
  /// Throws NumericError naming `site` if any entry is NaN/Inf.
  void require_finite(const std::string& site) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // In-place arithmetic.
  Tensor& operator+=(const Tensor& rhs);
  Tensor& operator-=(const Tensor& rhs);
  Tensor& operator*=(double s);
  /// this += s * rhs
  void add_scaled(const Tensor& rhs, double s);
  /// this *= rhs elementwise
  void mul_inplace(const Tensor& rhs);

  double sum() const;
  double squared_norm() const;
  double frobenius_norm() const;
  double max_abs() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor lhs, const Tensor& rhs);
Tensor operator-(Tensor lhs, const Tensor& rhs);
Tensor operator*(Tensor lhs, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);

/// C = alpha * op(A) * op(B) + beta * C, row-major (cblas_dgemm).
void gemm(bool trans_a, bool trans_b, double alpha, const Tensor& a,
          const Tensor& b, double beta, Tensor& c);

/// Plain product of 2-D tensors.
Tensor matmul(const Tensor& a, const Tensor& b);

/// y[i,:] += b for every row i of a 2-D tensor.
void add_row_broadcast(Tensor& y, const Tensor& b);

/// Column-wise sum of a 2-D tensor into a length-cols vector (accumulates).
void accumulate_column_sums(const Tensor& m, Tensor& out);

/// Same data, new shape; element counts must agree.
Tensor reshape(Tensor t, std::vector<std::size_t> new_shape);

/// Copies the given rows of a 2-D tensor into a new [K, D] tensor.
Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& rows);

/// dst[rows[k], :] += grad[k, :]; duplicate row indices accumulate.
void scatter_add_rows(const Tensor& grad, const std::vector<std::size_t>& rows,
                      Tensor& dst);

std::string shape_to_string(const std::vector<std::size_t>& shape);

/// Pins the BLAS backend to one thread so results are reproducible
/// run-to-run regardless of machine load; call once at startup.
void pin_blas_single_thread();

}  // namespace rmgan
