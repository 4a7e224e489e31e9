#pragma once

#include "lipens/data.hpp"
#include "lipens/model.hpp"

#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace lipens {

enum class AttackKind { FGSM, PGD };

/// White-box attack settings. Epsilon is the L-infinity budget (defaults
/// 0.1 for FGSM, 0.01 for PGD); eta and steps drive PGD. The optional clamp
/// keeps perturbed image pixels inside their valid box and is left disabled
/// for synthetic data.
struct AttackConfig {
  AttackKind kind = AttackKind::FGSM;
  double epsilon = 0.1;
  double eta = 0.0;  // PGD step size; 0 means epsilon/10
  int steps = 40;    // PGD iterations
  std::optional<std::pair<double, double>> clamp;

  static AttackConfig fgsm(double eps = 0.1) {
    AttackConfig c;
    c.kind = AttackKind::FGSM;
    c.epsilon = eps;
    return c;
  }
  static AttackConfig pgd(double eps = 0.01, int steps = 40, double eta = 0.0) {
    AttackConfig c;
    c.kind = AttackKind::PGD;
    c.epsilon = eps;
    c.steps = steps;
    c.eta = eta;
    return c;
  }

  void validate() const;
};

/// Single-step signed-gradient attack: x + eps * sign(grad_x J(f(x), y)),
/// with sign(0) = 0. Accepts a single input [d] with one label or a batch
/// [B x d] with B labels; rows are attacked independently.
Tensor fgsm(const Model& f, const Tensor& x, const std::vector<int>& labels,
            const AttackConfig& cfg);

/// Iterated signed-gradient ascent from a clean start, each step projected
/// onto the epsilon-ball around x and then clamped to the input box. With
/// steps=1 and eta=epsilon this reproduces fgsm bit-exactly for interior
/// points.
Tensor pgd(const Model& f, const Tensor& x, const std::vector<int>& labels,
           const AttackConfig& cfg);

/// Dispatches on cfg.kind.
Tensor attack(const Model& f, const Tensor& x, const std::vector<int>& labels,
              const AttackConfig& cfg);

/// Accuracy on per-sample attacked inputs, attacks computed against the
/// evaluated model itself (gradients flow through the full ensemble map).
/// When `jsonl` is given, one line per sample is streamed:
/// {"index":i,"clean_pred":c,"adv_pred":a,"linf_perturbation":d}.
double adversarial_accuracy(const Model& f, const LabeledDataset& data,
                            const AttackConfig& cfg, std::ostream* jsonl = nullptr);

}  // namespace lipens
