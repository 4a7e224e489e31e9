#pragma once

#include "lipens/tensor.hpp"

#include <functional>
#include <vector>

namespace lipens::ad {

class Graph;

/// Handle to a node in a computation graph. Cheap to copy; the graph owns
/// the storage and must outlive every handle.
class Var {
public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient of the backward target w.r.t. this node. Valid after
  /// Graph::backward on a graph where this node requires a gradient.
  const Tensor& grad() const;
  bool requires_grad() const;
  bool valid() const { return g_ != nullptr; }
  Graph* graph() const { return g_; }

private:
  friend class Graph;
  Var(Graph* g, std::size_t idx) : g_(g), idx_(idx) {}

  Graph* g_ = nullptr;
  std::size_t idx_ = 0;
};

/// Reverse-mode tape. Build a forward computation out of the free functions
/// below, then call backward(output) exactly once on a scalar output.
/// A graph is confined to a single thread; independent graphs may run
/// concurrently.
class Graph {
public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Non-differentiable leaf.
  Var constant(Tensor v);
  /// Differentiable leaf.
  Var input(Tensor v);

  /// Backpropagates from a scalar output, populating grad() on every
  /// differentiable node it reaches. A second call on the same graph is a
  /// contract violation and throws std::logic_error.
  void backward(Var output);

  bool backward_done() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

  /// Low-level tape access for defining ops: a node's stored value, gradient
  /// accumulator and backward hook. The free functions below are built on
  /// emit(); new ops can be added the same way.
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Graph&, std::size_t)> backprop;  // empty for leaves
  };

  Var emit(Tensor value, bool requires_grad, std::function<void(Graph&, std::size_t)> backprop);
  Node& node(std::size_t i) { return nodes_[i]; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  static std::size_t index_of(Var v) { return v.idx_; }

private:
  friend class Var;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

/// a[m x k] * b[k x n]; rank-1 b is a column and yields a rank-1 result.
Var matmul(Var a, Var b);

/// Dense layer pre-activation. For rank-1 x: W x + b. For a batch
/// [B x in]: x W^T + 1 b^T, one sample per row.
Var affine(Var x, Var w, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var relu(Var x);  // subgradient at 0 is 0
Var abs(Var x);   // subgradient at 0 is 0
Var sum(Var x);   // scalar sum of all elements

/// Feature-dimension concatenation: rank-1 parts chain into one vector,
/// rank-2 parts with equal row counts stack columns.
Var concat(const std::vector<Var>& parts);

/// Mean over rows of -log softmax(logits_row)[label_row]; max-subtraction
/// keeps the softmax stable. Rank-1 logits take a single label.
Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);

}  // namespace lipens::ad
