#include "lipens/train.hpp"

#include "lipens/errors.hpp"
#include "lipens/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lipens {

void TrainConfig::validate() const {
  if (learning_rate <= 0 || beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1 ||
      eps_adam <= 0)
    throw std::invalid_argument("TrainConfig: rates must be positive, betas in (0,1)");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epoch count");
}

void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, int t,
               const TrainConfig& cfg) {
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v))
    throw DimensionError("adam_step: state shape mismatch");
  if (t < 1) throw std::invalid_argument("adam_step: t is 1-based");
  m.vec() = cfg.beta1 * m.vec() + (1.0 - cfg.beta1) * grad.vec();
  v.vec().array() =
      cfg.beta2 * v.vec().array() + (1.0 - cfg.beta2) * grad.vec().array().square();
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  param.vec().array() -= cfg.learning_rate * (m.vec().array() / c1) /
                         ((v.vec().array() / c2).sqrt() + cfg.eps_adam);
}

TrainResult train(Network net, const LabeledDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.dim() != net.input_dim())
    throw DimensionError("train: dataset width does not match network input");
  if (data.class_count > net.output_dim())
    throw DimensionError("train: more classes than network outputs");

  TrainResult result;
  const Index n = data.size();
  const Index steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs) *
                              static_cast<std::size_t>(steps_per_epoch));

  // Adam state per layer: (mW, vW, mb, vb).
  struct LayerState {
    Tensor mw, vw, mb, vb;
  };
  std::vector<LayerState> state;
  for (const DenseLayer& l : net.layers) {
    state.push_back({Tensor::zeros_like(l.weights), Tensor::zeros_like(l.weights),
                     Tensor::zeros_like(l.bias), Tensor::zeros_like(l.bias)});
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  int t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::derive(cfg.rng_seed, 0x65706f63ull, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index b = std::min(cfg.batch_size, n - start);
      Tensor x = Tensor::zeros(b, data.dim());
      std::vector<int> ys(static_cast<std::size_t>(b));
      for (Index r = 0; r < b; ++r) {
        const Index src = order[static_cast<std::size_t>(start + r)];
        x.mat().row(r) = data.inputs.mat().row(src);
        ys[static_cast<std::size_t>(r)] = data.labels[static_cast<std::size_t>(src)];
      }

      ad::Graph g;
      NetworkParams params;
      ad::Var logits = forward(g, net, g.constant(std::move(x)), params);
      ad::Var loss = ad::softmax_cross_entropy(logits, ys);
      g.backward(loss);

      const double loss_value = loss.value().value();
      if (!std::isfinite(loss_value)) throw NumericalError("train: non-finite loss");
      result.loss_history.push_back(loss_value);

      ++t;
      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        adam_step(net.layers[li].weights, params.layers[li].first.grad(), state[li].mw,
                  state[li].vw, t, cfg);
        adam_step(net.layers[li].bias, params.layers[li].second.grad(), state[li].mb,
                  state[li].vb, t, cfg);
      }
    }
  }

  result.net = std::move(net);
  return result;
}

std::vector<int> predict(const Tensor& logits) {
  const Index rows = (logits.rank() == 2) ? logits.rows() : 1;
  const Index k = (logits.rank() == 2) ? logits.cols() : logits.size();
  Eigen::Map<const RowMatrix> Z(logits.data(), rows, k);
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    int best = 0;
    for (Index j = 1; j < k; ++j) {
      if (Z(r, j) > Z(r, best)) best = static_cast<int>(j);
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

double evaluate(const Model& model, const LabeledDataset& data) {
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (data.dim() != model.input_dim())
    throw DimensionError("evaluate: dataset width does not match model input");

  const std::vector<int> preds = predict(model.forward(data.inputs));
  Index correct = 0;
  for (Index i = 0; i < data.size(); ++i) {
    if (preds[static_cast<std::size_t>(i)] == data.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate(const Network& net, const LabeledDataset& data) {
  return evaluate(NetworkModel(net), data);
}

}  // namespace lipens
