#pragma once

#include "lipens/data.hpp"
#include "lipens/model.hpp"
#include "lipens/network.hpp"

#include <cstdint>
#include <vector>

namespace lipens {

/// Mini-batch Adam configuration. The defaults mirror the common Adam
/// parameterization (lr 1e-3, betas 0.9/0.999, eps 1e-8, batch 128).
struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  Index batch_size = 128;
  int epochs = 10;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct TrainResult {
  Network net;
  /// One cross-entropy value per optimizer step:
  /// epochs * ceil(N / batch_size) entries.
  std::vector<double> loss_history;
};

/// Trains a classifier with Adam on shuffled mini-batches. Shuffle order is
/// drawn from a counter-based generator reseeded per epoch from rng_seed, so
/// identical (seed, config, data) give bit-identical weights on any platform.
TrainResult train(Network net, const LabeledDataset& data, const TrainConfig& cfg);

/// One Adam update. m and v are the running first/second moment estimates
/// (zero-initialized by the caller); t is the 1-based step count used for
/// bias correction.
void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, int t,
               const TrainConfig& cfg);

/// Categorical accuracy: fraction of rows whose argmax logit matches the
/// label, argmax ties resolved toward the lowest class index.
double evaluate(const Model& model, const LabeledDataset& data);
double evaluate(const Network& net, const LabeledDataset& data);

/// Row-wise argmax with ties toward the lowest index.
std::vector<int> predict(const Tensor& logits);

}  // namespace lipens
