#include "lipens/attacks.hpp"

#include "lipens/errors.hpp"
#include "lipens/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace lipens {

namespace {

constexpr Index kChunkRows = 512;

void require_batch(const Model& f, const Tensor& x, const std::vector<int>& labels) {
  const Index rows = (x.rank() == 2) ? x.rows() : 1;
  const Index d = (x.rank() == 2) ? x.cols() : x.size();
  if (d != f.input_dim()) throw DimensionError("attack: input width vs model input");
  if (static_cast<Index>(labels.size()) != rows)
    throw DimensionError("attack: one label per input row required");
}

/// Loss gradient w.r.t. the inputs, one row per sample. The mean reduction
/// scales every row by 1/B, which signed steps do not see.
RowMatrix input_gradient(const Model& f, const Tensor& x, const std::vector<int>& labels) {
  ad::Graph g;
  ad::Var vx = g.input(x);
  ad::Var logits = f.forward(g, vx);
  ad::Var loss = ad::softmax_cross_entropy(logits, labels);
  g.backward(loss);
  const Tensor& grad = vx.grad();
  if (!grad.all_finite()) throw NumericalError("attack: non-finite input gradient");
  return Eigen::Map<const RowMatrix>(grad.data(), x.rows(), x.cols());
}

Tensor clamp_box(Tensor x, const std::optional<std::pair<double, double>>& box) {
  if (box) x.vec() = x.vec().cwiseMax(box->first).cwiseMin(box->second);
  return x;
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("AttackConfig: epsilon must be positive");
  if (kind == AttackKind::PGD) {
    if (steps < 1) throw std::invalid_argument("AttackConfig: PGD needs steps >= 1");
    if (eta < 0.0) throw std::invalid_argument("AttackConfig: negative eta");
  }
  if (clamp && clamp->first > clamp->second)
    throw std::invalid_argument("AttackConfig: clamp box is inverted");
}

Tensor fgsm(const Model& f, const Tensor& x, const std::vector<int>& labels,
            const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.kind != AttackKind::FGSM) throw std::invalid_argument("fgsm: config kind is not FGSM");
  require_batch(f, x, labels);

  const RowMatrix grad = input_gradient(f, x, labels);
  Tensor adv = x;
  Eigen::Map<RowMatrix> a(adv.data(), x.rows(), x.cols());
  a += cfg.epsilon * grad.array().sign().matrix();
  return clamp_box(std::move(adv), cfg.clamp);
}

Tensor pgd(const Model& f, const Tensor& x, const std::vector<int>& labels,
           const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.kind != AttackKind::PGD) throw std::invalid_argument("pgd: config kind is not PGD");
  require_batch(f, x, labels);

  const double eta = (cfg.eta > 0.0) ? cfg.eta : cfg.epsilon / 10.0;
  const Index rows = x.rows(), cols = x.cols();
  Eigen::Map<const RowMatrix> x0(x.data(), rows, cols);

  Tensor adv = x;  // clean start
  Eigen::Map<RowMatrix> a(adv.data(), rows, cols);
  for (int step = 0; step < cfg.steps; ++step) {
    const RowMatrix grad = input_gradient(f, adv, labels);
    a += eta * grad.array().sign().matrix();
    a = a.cwiseMax((x0.array() - cfg.epsilon).matrix())
            .cwiseMin((x0.array() + cfg.epsilon).matrix());
    if (cfg.clamp) a = a.cwiseMax(cfg.clamp->first).cwiseMin(cfg.clamp->second);
  }
  return adv;
}

Tensor attack(const Model& f, const Tensor& x, const std::vector<int>& labels,
              const AttackConfig& cfg) {
  return (cfg.kind == AttackKind::FGSM) ? fgsm(f, x, labels, cfg) : pgd(f, x, labels, cfg);
}

double adversarial_accuracy(const Model& f, const LabeledDataset& data,
                            const AttackConfig& cfg, std::ostream* jsonl) {
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("adversarial_accuracy: empty dataset");
  if (data.dim() != f.input_dim())
    throw DimensionError("adversarial_accuracy: dataset width vs model input");

  Index correct = 0;
  for (Index start = 0; start < data.size(); start += kChunkRows) {
    const Index c = std::min(kChunkRows, data.size() - start);
    Tensor x = Tensor::zeros(c, data.dim());
    std::vector<int> ys(static_cast<std::size_t>(c));
    for (Index r = 0; r < c; ++r) {
      x.mat().row(r) = data.inputs.mat().row(start + r);
      ys[static_cast<std::size_t>(r)] = data.labels[static_cast<std::size_t>(start + r)];
    }

    const std::vector<int> clean_preds = predict(f.forward(x));
    Tensor adv = attack(f, x, ys, cfg);
    const std::vector<int> adv_preds = predict(f.forward(adv));

    for (Index r = 0; r < c; ++r) {
      if (adv_preds[static_cast<std::size_t>(r)] == ys[static_cast<std::size_t>(r)]) ++correct;
      if (jsonl) {
        const double dist =
            (adv.mat().row(r) - x.mat().row(r)).lpNorm<Eigen::Infinity>();
        nlohmann::ordered_json line;
        line["index"] = start + r;
        line["clean_pred"] = clean_preds[static_cast<std::size_t>(r)];
        line["adv_pred"] = adv_preds[static_cast<std::size_t>(r)];
        line["linf_perturbation"] = dist;
        (*jsonl) << line.dump() << "\n";
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace lipens
