#pragma once

#include "lipens/model.hpp"
#include "lipens/network.hpp"
#include "lipens/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lipens {

/// Norm pair used in the empirical ratio ||f(x)-f(x')||_num / ||x-x'||_den.
/// L1OverLinf is the reference estimator; L2OverL2 is the matched-norm
/// variant used by the ensemble soundness checks, where both sides of an
/// inequality must share one norm.
enum class RatioNorms { L1OverLinf, L2OverL2 };

/// Projected-ascent settings for the empirical estimator.
struct AscentConfig {
  int steps = 50;
  int restarts = 10;
  /// Per-step movement; 0 means radius/10.
  double step_size = 0.0;
  std::uint64_t seed = 0x9d2c5680ca35f3a1ull;
  RatioNorms norms = RatioNorms::L1OverLinf;
  /// For inputs up to this dimension the ascent also scores the pure
  /// sign-gradient corner each step (adopting it when it improves) and
  /// finishes with greedy one-coordinate sign flips. Disabled at image
  /// scale, where the extra forward passes dominate the budget.
  Index corner_snap_max_dim = 32;
  bool keep_witnesses = true;

  void validate() const;
};

/// A pair (x, x') achieving a reported ratio; re-evaluating the model on it
/// reproduces the ratio.
struct Witness {
  Tensor anchor;
  Tensor adversarial;
  double ratio = 0.0;
};

/// Outcome of a Lipschitz analysis: either an analytic upper bound (layer
/// spectral-norm product) or an empirical local estimate (a lower bound on
/// the true local constant).
struct LipschitzReport {
  enum class Kind { AnalyticUpper, EmpiricalLocal };

  Kind kind = Kind::AnalyticUpper;
  double value = 0.0;
  double radius = 0.0;  // EmpiricalLocal: the infinity-ball radius
  Index n_samples = 0;  // EmpiricalLocal: anchor count
  AscentConfig ascent;  // EmpiricalLocal: settings in force

  std::vector<double> per_anchor;   // per-anchor best ratios; value is their mean
  std::vector<Witness> witnesses;   // parallel to per_anchor when kept

  /// Single-line JSON: {kind, value, radius, n_samples, config, witnesses?}.
  std::string to_json_line(bool include_witnesses = false) const;
};

/// Largest singular value by power iteration on W^T W, deterministic start,
/// converged to relative tolerance tol.
double spectral_norm(const Tensor& w, double tol = 1e-10, int max_iter = 10000);

/// Product of layer spectral norms; ReLU contributes factor 1 and biases do
/// not affect the constant.
LipschitzReport analytic_bound(const Network& net);

/// Empirical local Lipschitz estimate: mean over anchors of the maximized
/// ratio over the infinity-ball of the given radius, maximized by projected
/// sign-gradient ascent with random corner restarts. The search keeps x' on
/// the ball surface so the denominator never vanishes; the returned value is
/// the best found and therefore a lower bound.
LipschitzReport empirical_llc(const Model& f, const Tensor& anchors, double radius,
                              const AscentConfig& cfg = {});
LipschitzReport empirical_llc(const Model& f, const std::vector<Tensor>& anchors,
                              double radius, const AscentConfig& cfg = {});

}  // namespace lipens
