#pragma once

#include <Eigen/Core>

#include <vector>

namespace lipens {

using Eigen::Index;

/// Row-major dynamic matrix; the storage convention for weights and batches.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Dense rank-1 or rank-2 value of 64-bit floats with row-major flat storage.
///
/// Rank-1 tensors view as column vectors, rank-2 as row-major matrices.
/// Tensors are plain values: operations return fresh tensors, and a tensor
/// shared across threads must not be mutated.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Index n);
  static Tensor zeros(Index rows, Index cols);
  static Tensor zeros_like(const Tensor& other);
  static Tensor scalar(double x);
  static Tensor from_vector(Vector v);
  static Tensor from_matrix(RowMatrix m);

  int rank() const { return rank_; }
  Index size() const { return data_.size(); }
  Index rows() const { return rank_ == 2 ? rows_ : data_.size(); }
  Index cols() const { return rank_ == 2 ? cols_ : 1; }
  std::vector<Index> shape() const;

  bool same_shape(const Tensor& other) const {
    return rank_ == other.rank_ && rows() == other.rows() && cols() == other.cols();
  }

  /// Scalar access; throws unless size() == 1.
  double value() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  /// Matrix view: rank-2 as rows x cols, rank-1 as n x 1.
  Eigen::Map<RowMatrix> mat() { return {data_.data(), rows(), cols()}; }
  Eigen::Map<const RowMatrix> mat() const { return {data_.data(), rows(), cols()}; }

  /// Flat view over the row-major payload.
  Eigen::Map<Vector> vec() { return {data_.data(), data_.size()}; }
  Eigen::Map<const Vector> vec() const { return {data_.data(), data_.size()}; }

  bool all_finite() const { return data_.allFinite(); }

private:
  Tensor(Vector data, Index rows, Index cols, int rank)
      : data_(std::move(data)), rows_(rows), cols_(cols), rank_(rank) {}

  Vector data_;
  Index rows_ = 0;
  Index cols_ = 0;
  int rank_ = 0;
};

/// Matrix product a[m x k] * b[k x n]. A rank-1 right operand is treated as a
/// column and yields a rank-1 result.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise max(0, x).
Tensor relu(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor abs(const Tensor& a);

}  // namespace lipens
