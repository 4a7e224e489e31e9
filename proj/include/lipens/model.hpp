#pragma once

#include "lipens/autodiff.hpp"
#include "lipens/network.hpp"
#include "lipens/tensor.hpp"

namespace lipens {

/// A differentiable map R^d -> R^k: the common surface the attacks and the
/// local-Lipschitz estimator see, so single networks and ensembles are
/// interchangeable targets. Implementations are immutable once built and
/// safe to share across threads.
class Model {
public:
  virtual ~Model() = default;

  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;

  /// Logits for a single input [d] or a batch [B x d].
  virtual Tensor forward(const Tensor& x) const = 0;

  /// Differentiable forward; parameters enter as constants so backward
  /// reaches the input.
  virtual ad::Var forward(ad::Graph& g, ad::Var x) const = 0;
};

/// Non-owning Model view over a Network.
class NetworkModel final : public Model {
public:
  explicit NetworkModel(const Network& net) : net_(&net) {}

  Index input_dim() const override { return net_->input_dim(); }
  Index output_dim() const override { return net_->output_dim(); }
  Tensor forward(const Tensor& x) const override { return lipens::forward(*net_, x); }
  ad::Var forward(ad::Graph& g, ad::Var x) const override {
    return lipens::forward(g, *net_, x);
  }

private:
  const Network* net_;
};

}  // namespace lipens
