#include "lipens/autodiff.hpp"

#include "lipens/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace lipens::ad {

namespace {

void require_same_graph(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw std::logic_error("ad: operand is not bound to a graph");
}

}  // namespace

const Tensor& Var::value() const {
  if (!g_) throw std::logic_error("ad::Var: empty handle");
  return g_->node(idx_).value;
}

const Tensor& Var::grad() const {
  if (!g_) throw std::logic_error("ad::Var: empty handle");
  if (!g_->backward_done()) throw std::logic_error("ad::Var::grad: backward has not run");
  if (!g_->node(idx_).requires_grad)
    throw std::logic_error("ad::Var::grad: node does not require a gradient");
  return g_->node(idx_).grad;
}

bool Var::requires_grad() const {
  if (!g_) return false;
  return g_->node(idx_).requires_grad;
}

Var Graph::emit(Tensor value, bool requires_grad,
                std::function<void(Graph&, std::size_t)> backprop) {
  if (backward_done_)
    throw std::logic_error("ad::Graph: tape is finalized after backward; build a new graph");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor v) { return emit(std::move(v), false, nullptr); }

Var Graph::input(Tensor v) { return emit(std::move(v), true, nullptr); }

void Graph::backward(Var output) {
  if (output.g_ != this) throw std::invalid_argument("ad::Graph::backward: foreign node");
  if (backward_done_) throw std::logic_error("ad::Graph::backward: already run on this graph");
  const Node& out = node(output.idx_);
  if (out.value.size() != 1)
    throw std::invalid_argument("ad::Graph::backward: target must be scalar, got size " +
                                std::to_string(out.value.size()));
  backward_done_ = true;
  if (!out.requires_grad) return;  // nothing reachable is differentiable

  for (std::size_t i = 0; i <= output.idx_; ++i) {
    if (nodes_[i].requires_grad) nodes_[i].grad = Tensor::zeros_like(nodes_[i].value);
  }
  node(output.idx_).grad.data()[0] = 1.0;
  for (std::size_t i = output.idx_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backprop) n.backprop(*this, i);
  }
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph();
  Tensor value = lipens::matmul(a.value(), b.value());
  const bool req = a.requires_grad() || b.requires_grad();
  const std::size_t ia = Graph::index_of(a), ib = Graph::index_of(b);
  return g.emit(std::move(value), req, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& go = gr.node(self).grad;
    if (gr.node(ia).requires_grad)
      gr.node(ia).grad.mat().noalias() += go.mat() * gr.node(ib).value.mat().transpose();
    if (gr.node(ib).requires_grad)
      gr.node(ib).grad.mat().noalias() += gr.node(ia).value.mat().transpose() * go.mat();
  });
}

Var affine(Var x, Var w, Var b) {
  require_same_graph(x, w);
  require_same_graph(w, b);
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (wv.rank() != 2 || bv.rank() != 1 || bv.size() != wv.rows())
    throw DimensionError("affine: W must be [out x in] with bias [out]");
  const Index in = wv.cols(), out = wv.rows();

  Tensor value;
  if (xv.rank() == 1) {
    if (xv.size() != in) throw DimensionError("affine: input size does not match W columns");
    value = Tensor::zeros(out);
    value.mat().noalias() = wv.mat() * xv.mat();
    value.vec() += bv.vec();
  } else {
    if (xv.cols() != in) throw DimensionError("affine: batch width does not match W columns");
    value = Tensor::zeros(xv.rows(), out);
    value.mat().noalias() = xv.mat() * wv.mat().transpose();
    value.mat().rowwise() += bv.vec().transpose();
  }

  const bool req = x.requires_grad() || w.requires_grad() || b.requires_grad();
  const std::size_t ix = Graph::index_of(x), iw = Graph::index_of(w), ib = Graph::index_of(b);
  return g.emit(std::move(value), req, [ix, iw, ib](Graph& gr, std::size_t self) {
    const Tensor& go = gr.node(self).grad;
    const Tensor& xv = gr.node(ix).value;
    const Tensor& wv = gr.node(iw).value;
    if (xv.rank() == 1) {
      if (gr.node(ix).requires_grad)
        gr.node(ix).grad.mat().noalias() += wv.mat().transpose() * go.mat();
      if (gr.node(iw).requires_grad)
        gr.node(iw).grad.mat().noalias() += go.mat() * xv.mat().transpose();
      if (gr.node(ib).requires_grad) gr.node(ib).grad.vec() += go.vec();
    } else {
      if (gr.node(ix).requires_grad)
        gr.node(ix).grad.mat().noalias() += go.mat() * wv.mat();
      if (gr.node(iw).requires_grad)
        gr.node(iw).grad.mat().noalias() += go.mat().transpose() * xv.mat();
      if (gr.node(ib).requires_grad)
        gr.node(ib).grad.vec() += go.mat().colwise().sum().transpose();
    }
  });
}

namespace {

template <typename Fwd, typename Bwd>
Var elementwise_binary(Var a, Var b, const char* name, Fwd fwd, Bwd bwd) {
  require_same_graph(a, b);
  if (!a.value().same_shape(b.value()))
    throw DimensionError(std::string(name) + ": shape mismatch");
  Graph& g = *a.graph();
  Tensor value = fwd(a.value(), b.value());
  const bool req = a.requires_grad() || b.requires_grad();
  const std::size_t ia = Graph::index_of(a), ib = Graph::index_of(b);
  return g.emit(std::move(value), req, [ia, ib, bwd](Graph& gr, std::size_t self) {
    bwd(gr, gr.node(self).grad, ia, ib);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return elementwise_binary(
      a, b, "add", [](const Tensor& x, const Tensor& y) { return lipens::add(x, y); },
      [](Graph& gr, const Tensor& go, std::size_t ia, std::size_t ib) {
        if (gr.node(ia).requires_grad) gr.node(ia).grad.vec() += go.vec();
        if (gr.node(ib).requires_grad) gr.node(ib).grad.vec() += go.vec();
      });
}

Var sub(Var a, Var b) {
  return elementwise_binary(
      a, b, "sub", [](const Tensor& x, const Tensor& y) { return lipens::sub(x, y); },
      [](Graph& gr, const Tensor& go, std::size_t ia, std::size_t ib) {
        if (gr.node(ia).requires_grad) gr.node(ia).grad.vec() += go.vec();
        if (gr.node(ib).requires_grad) gr.node(ib).grad.vec() -= go.vec();
      });
}

Var mul(Var a, Var b) {
  return elementwise_binary(
      a, b, "mul", [](const Tensor& x, const Tensor& y) { return lipens::mul(x, y); },
      [](Graph& gr, const Tensor& go, std::size_t ia, std::size_t ib) {
        if (gr.node(ia).requires_grad)
          gr.node(ia).grad.vec().array() += go.vec().array() * gr.node(ib).value.vec().array();
        if (gr.node(ib).requires_grad)
          gr.node(ib).grad.vec().array() += go.vec().array() * gr.node(ia).value.vec().array();
      });
}

Var scale(Var a, double c) {
  Graph& g = *a.graph();
  Tensor value = lipens::scale(a.value(), c);
  const std::size_t ia = Graph::index_of(a);
  return g.emit(std::move(value), a.requires_grad(), [ia, c](Graph& gr, std::size_t self) {
    if (gr.node(ia).requires_grad) gr.node(ia).grad.vec() += c * gr.node(self).grad.vec();
  });
}

Var relu(Var x) {
  Graph& g = *x.graph();
  Tensor value = lipens::relu(x.value());
  const std::size_t ix = Graph::index_of(x);
  return g.emit(std::move(value), x.requires_grad(), [ix](Graph& gr, std::size_t self) {
    if (!gr.node(ix).requires_grad) return;
    const Tensor& xv = gr.node(ix).value;
    gr.node(ix).grad.vec().array() +=
        (xv.vec().array() > 0.0).cast<double>() * gr.node(self).grad.vec().array();
  });
}

Var abs(Var x) {
  Graph& g = *x.graph();
  Tensor value = lipens::abs(x.value());
  const std::size_t ix = Graph::index_of(x);
  return g.emit(std::move(value), x.requires_grad(), [ix](Graph& gr, std::size_t self) {
    if (!gr.node(ix).requires_grad) return;
    const Tensor& xv = gr.node(ix).value;
    gr.node(ix).grad.vec().array() +=
        xv.vec().array().sign() * gr.node(self).grad.vec().array();
  });
}

Var sum(Var x) {
  Graph& g = *x.graph();
  Tensor value = Tensor::scalar(x.value().vec().sum());
  const std::size_t ix = Graph::index_of(x);
  return g.emit(std::move(value), x.requires_grad(), [ix](Graph& gr, std::size_t self) {
    if (!gr.node(ix).requires_grad) return;
    gr.node(ix).grad.vec().array() += gr.node(self).grad.value();
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  Graph& g = *parts.front().graph();
  const int rank = parts.front().value().rank();
  const Index rows = parts.front().value().rows();
  Index total_cols = 0;
  bool req = false;
  for (const Var& p : parts) {
    require_same_graph(parts.front(), p);
    if (p.value().rank() != rank) throw DimensionError("concat: mixed ranks");
    if (rank == 2 && p.value().rows() != rows) throw DimensionError("concat: row counts differ");
    total_cols += (rank == 2) ? p.value().cols() : p.value().size();
    req = req || p.requires_grad();
  }

  Tensor value = (rank == 2) ? Tensor::zeros(rows, total_cols) : Tensor::zeros(total_cols);
  std::vector<std::size_t> idx;
  std::vector<Index> widths;
  Index off = 0;
  for (const Var& p : parts) {
    const Index w = (rank == 2) ? p.value().cols() : p.value().size();
    if (rank == 2)
      value.mat().middleCols(off, w) = p.value().mat();
    else
      value.vec().segment(off, w) = p.value().vec();
    idx.push_back(Graph::index_of(p));
    widths.push_back(w);
    off += w;
  }

  return g.emit(std::move(value), req,
                [idx, widths, rank](Graph& gr, std::size_t self) {
                  const Tensor& go = gr.node(self).grad;
                  Index off = 0;
                  for (std::size_t j = 0; j < idx.size(); ++j) {
                    if (gr.node(idx[j]).requires_grad) {
                      if (rank == 2)
                        gr.node(idx[j]).grad.mat() += go.mat().middleCols(off, widths[j]);
                      else
                        gr.node(idx[j]).grad.vec() += go.vec().segment(off, widths[j]);
                    }
                    off += widths[j];
                  }
                });
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
  Graph& g = *logits.graph();
  const Tensor& z = logits.value();
  const Index rows = (z.rank() == 2) ? z.rows() : 1;
  const Index k = (z.rank() == 2) ? z.cols() : z.size();
  if (rows == 0 || k == 0) throw DimensionError("softmax_cross_entropy: empty logits");
  if (static_cast<Index>(labels.size()) != rows)
    throw DimensionError("softmax_cross_entropy: one label per row required");
  for (int y : labels) {
    if (y < 0 || y >= k)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                  " out of range [0, " + std::to_string(k) + ")");
  }

  // Row-major flat data views both ranks as [rows x k].
  Eigen::Map<const RowMatrix> Z(z.data(), rows, k);
  double total = 0.0;
  for (Index r = 0; r < rows; ++r) {
    const double m = Z.row(r).maxCoeff();
    const double lse = m + std::log((Z.row(r).array() - m).exp().sum());
    total += lse - Z(r, labels[static_cast<std::size_t>(r)]);
  }
  Tensor value = Tensor::scalar(total / static_cast<double>(rows));

  const std::size_t iz = Graph::index_of(logits);
  std::vector<int> ys = labels;
  return g.emit(std::move(value), logits.requires_grad(),
                [iz, ys, rows, k](Graph& gr, std::size_t self) {
                  if (!gr.node(iz).requires_grad) return;
                  const double go = gr.node(self).grad.value();
                  Eigen::Map<const RowMatrix> Z(gr.node(iz).value.data(), rows, k);
                  Eigen::Map<RowMatrix> GZ(gr.node(iz).grad.data(), rows, k);
                  const double inv = 1.0 / static_cast<double>(rows);
                  for (Index r = 0; r < rows; ++r) {
                    const double m = Z.row(r).maxCoeff();
                    Eigen::RowVectorXd p = (Z.row(r).array() - m).exp();
                    p /= p.sum();
                    p[ys[static_cast<std::size_t>(r)]] -= 1.0;
                    GZ.row(r) += go * inv * p;
                  }
                });
}

}  // namespace lipens::ad
