#pragma once

#include "lipens/autodiff.hpp"
#include "lipens/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace lipens {

enum class Activation : std::uint8_t { ReLU = 0, Identity = 1 };

/// One dense layer: y = act(W x + b), weights [out x in], bias [out].
struct DenseLayer {
  Tensor weights;
  Tensor bias;
  Activation activation = Activation::ReLU;

  Index in_dim() const { return weights.cols(); }
  Index out_dim() const { return weights.rows(); }
};

/// Feed-forward classifier. The final layer carries Identity activation and
/// emits raw logits; softmax lives only inside the loss.
struct Network {
  std::vector<DenseLayer> layers;

  Index input_dim() const;
  Index output_dim() const;

  /// Checks that layer dimensions chain and all parameters are finite.
  void validate() const;
};

/// Logits for a single input [d] or a batch [B x d], one sample per row.
Tensor forward(const Network& net, const Tensor& x);

/// Differentiable forward pass; weights enter the graph as constants, so
/// backward reaches only the input (the attack / ascent path).
ad::Var forward(ad::Graph& g, const Network& net, ad::Var x);

/// Per-layer (weights, bias) graph handles for optimizer updates.
struct NetworkParams {
  std::vector<std::pair<ad::Var, ad::Var>> layers;
};

/// Differentiable forward with weights registered as differentiable inputs
/// (the training path). `params` receives the handles.
ad::Var forward(ad::Graph& g, const Network& net, ad::Var x, NetworkParams& params);

/// -log softmax(logits)[label], stabilized by max subtraction.
double cross_entropy(const Tensor& logits, int label);

/// Builds the registry architectures: "fnn2", "fnn4", "fnn5" are 2-, 4- and
/// 5-weight-layer ReLU classifiers with a common hidden width. He-normal
/// init, zero biases, deterministic in the seed.
Network make_fnn(const std::string& arch, Index input_dim, Index classes,
                 Index hidden_width, std::uint64_t seed);

/// Same, parameterized by total layer count (>= 1).
Network make_fnn_layers(int n_layers, Index input_dim, Index classes,
                        Index hidden_width, std::uint64_t seed);

/// Binary weight-file round trip. Little-endian f64 payload; see
/// docs/weight-format.md for the byte layout.
void save_network(const Network& net, std::ostream& out);
void save_network(const Network& net, const std::string& path);
Network load_network(std::istream& in);
Network load_network(const std::string& path);

}  // namespace lipens
