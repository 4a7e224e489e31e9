#pragma once

#include "lipens/data.hpp"
#include "lipens/lipschitz.hpp"
#include "lipens/model.hpp"
#include "lipens/network.hpp"
#include "lipens/train.hpp"

#include <string>
#include <vector>

namespace lipens {

/// Weight-selection rule for bagging, and constraint direction for stacking.
/// Proposed follows the inverse-LLC rule; Equal is uniform; Reverse assigns
/// the largest weight to the largest member constant (the ablation order).
enum class WeightMode { Proposed, Equal, Reverse };

const char* weight_mode_name(WeightMode mode);
WeightMode weight_mode_from_name(const std::string& name);

/// Nonnegative bagging weights summing to 1 (within 1e-12).
struct BaggingWeights {
  Vector w;
  void validate() const;
};

/// Certified Lipschitz constant of a bagged ensemble: sum of w_i * l_i.
double bagged_lc(const std::vector<double>& ell, const BaggingWeights& weights);

/// Certified Lipschitz constant of a stacked ensemble: L_g * sqrt(sum l_i^2).
double stacked_lc(const std::vector<double>& ell, double lg);

/// Weight selection from per-member constants; all constants must be
/// positive. Proposed: w_i proportional to 1/l_i. Equal: 1/n. Reverse: the
/// Proposed weight multiset reassigned so the largest weight lands on the
/// largest constant.
BaggingWeights choose_bagging_weights(const std::vector<double>& ell, WeightMode mode);

/// Majorization comparison of two weight vectors against a member-constant
/// vector, all three sorted descending (the proof's convention). When w
/// majorizes w' the dot-product ordering l.w >= l.w' must hold.
struct MajorizationVerdict {
  bool comparable = false;       // w majorizes w'
  bool inequality_holds = false; // l.w >= l.w' (up to 1e-12), meaningful when comparable
  double lhs = 0.0;              // l.w
  double rhs = 0.0;              // l.w'
};
MajorizationVerdict check_majorization(const std::vector<double>& ell_desc,
                                       const std::vector<double>& w_desc,
                                       const std::vector<double>& wprime_desc);

/// An ensemble of frozen member networks, either bagged (weighted logit
/// average) or stacked (meta-learner over concatenated member logits), with
/// its Lipschitz certificate. Immutable once built; concurrent forwards are
/// safe.
class EnsembleModel final : public Model {
public:
  enum class Kind { Bagged, Stacked };

  Kind kind = Kind::Bagged;
  WeightMode mode = WeightMode::Proposed;
  std::vector<Network> members;

  BaggingWeights weights;  // Bagged only
  Network meta;            // Stacked only
  double certified_lg = 0.0;

  /// Per-member empirical local estimates used for weight selection and the
  /// certificate.
  std::vector<LipschitzReport> member_llc;
  double llc_radius = 0.0;
  double certificate = 0.0;

  std::vector<double> member_llc_values() const;
  void validate() const;

  Index input_dim() const override;
  Index output_dim() const override;
  Tensor forward(const Tensor& x) const override;
  ad::Var forward(ad::Graph& g, ad::Var x) const override;
};

/// Weighted member-logit sum or meta-learner output; identical to
/// model.forward, kept as a named entry point.
Tensor ensemble_forward(const EnsembleModel& model, const Tensor& x);

/// The empirical estimator applied to the ensemble's end-to-end map.
LipschitzReport empirical_llc_ensemble(const EnsembleModel& model, const Tensor& anchors,
                                       double radius, const AscentConfig& cfg = {});

/// Measures member LLCs on the anchors, selects weights for the mode and
/// returns the bagged model with its certificate.
EnsembleModel build_bagged(std::vector<Network> members, const Tensor& anchors, double radius,
                           WeightMode mode, const AscentConfig& ascent = {});
/// Same, from precomputed member reports (must share radius and settings).
EnsembleModel build_bagged(std::vector<Network> members,
                           std::vector<LipschitzReport> member_reports, double radius,
                           WeightMode mode);

struct StackedOptions {
  Index meta_hidden = 64;
  TrainConfig meta_train{};
  /// Proposed target is safety * L_min / sqrt(sum l_i^2), kept strictly
  /// inside the admissible budget so rounding never breaches it.
  double proposed_safety = 0.95;
  /// Reverse target deliberately violates the admissible budget.
  double reverse_factor = 2.0;
};

/// Trains a meta-learner (one hidden ReLU layer, then linear) on held-out
/// data the members never saw, then uniformly rescales its layers so the
/// analytic bound hits the mode's target exactly. Biases are co-scaled so
/// the rescaled meta keeps the decision function of the trained one.
/// Mode must be Proposed or Reverse.
EnsembleModel build_stacked(std::vector<Network> members, const Tensor& anchors, double radius,
                            WeightMode mode, const LabeledDataset& heldout,
                            const StackedOptions& options = {},
                            const AscentConfig& ascent = {});
EnsembleModel build_stacked(std::vector<Network> members,
                            std::vector<LipschitzReport> member_reports, double radius,
                            WeightMode mode, const LabeledDataset& heldout,
                            const StackedOptions& options = {});

/// Ensemble manifest: JSON next to the serialized member/meta weight files.
/// Paths inside the manifest are relative to its directory.
void save_ensemble(const EnsembleModel& model, const std::string& manifest_path);
EnsembleModel load_ensemble(const std::string& manifest_path);

}  // namespace lipens
