#include "lipens/tensor.hpp"

#include "lipens/errors.hpp"

#include <string>

namespace lipens {

namespace {

std::string shape_str(const Tensor& t) {
  if (t.rank() == 1) return "[" + std::to_string(t.size()) + "]";
  return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

Tensor Tensor::zeros(Index n) {
  if (n < 0) throw DimensionError("Tensor::zeros: negative size");
  return Tensor(Vector::Zero(n), n, 1, 1);
}

Tensor Tensor::zeros(Index rows, Index cols) {
  if (rows < 0 || cols < 0) throw DimensionError("Tensor::zeros: negative size");
  return Tensor(Vector::Zero(rows * cols), rows, cols, 2);
}

Tensor Tensor::zeros_like(const Tensor& other) {
  if (other.rank() == 2) return zeros(other.rows(), other.cols());
  return zeros(other.size());
}

Tensor Tensor::scalar(double x) {
  Vector v(1);
  v[0] = x;
  return Tensor(std::move(v), 1, 1, 1);
}

Tensor Tensor::from_vector(Vector v) {
  const Index n = v.size();
  return Tensor(std::move(v), n, 1, 1);
}

Tensor Tensor::from_matrix(RowMatrix m) {
  const Index r = m.rows(), c = m.cols();
  Vector flat = Eigen::Map<Vector>(m.data(), m.size());
  return Tensor(std::move(flat), r, c, 2);
}

std::vector<Index> Tensor::shape() const {
  if (rank_ == 2) return {rows_, cols_};
  if (rank_ == 1) return {data_.size()};
  return {};
}

double Tensor::value() const {
  if (data_.size() != 1) throw DimensionError("Tensor::value: tensor is not a scalar");
  return data_[0];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) throw DimensionError("matmul: left operand must be rank-2");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree, " + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()));
  if (b.rank() == 1) {
    Tensor out = Tensor::zeros(a.rows());
    out.mat().noalias() = a.mat() * b.mat();
    return out;
  }
  Tensor out = Tensor::zeros(a.rows(), b.cols());
  out.mat().noalias() = a.mat() * b.mat();
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros_like(x);
  out.vec() = x.vec().cwiseMax(0.0);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros_like(a);
  out.vec() = a.vec() + b.vec();
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros_like(a);
  out.vec() = a.vec() - b.vec();
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros_like(a);
  out.vec() = a.vec().cwiseProduct(b.vec());
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros_like(a);
  out.vec() = c * a.vec();
  return out;
}

Tensor abs(const Tensor& a) {
  Tensor out = Tensor::zeros_like(a);
  out.vec() = a.vec().cwiseAbs();
  return out;
}

}  // namespace lipens
