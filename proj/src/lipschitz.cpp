#include "lipens/lipschitz.hpp"

#include "lipens/errors.hpp"
#include "lipens/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lipens {

namespace {

constexpr Index kChunkRows = 512;  // fixed so results never depend on scheduling

double row_norm(const Eigen::Ref<const Eigen::RowVectorXd>& v, RatioNorms norms, bool numerator) {
  if (norms == RatioNorms::L2OverL2) return v.norm();
  return numerator ? v.lpNorm<1>() : v.lpNorm<Eigen::Infinity>();
}

}  // namespace

void AscentConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("AscentConfig: negative step count");
  if (restarts < 1) throw std::invalid_argument("AscentConfig: need at least one restart");
  if (step_size < 0) throw std::invalid_argument("AscentConfig: negative step size");
}

double spectral_norm(const Tensor& w, double tol, int max_iter) {
  if (w.size() == 0) throw DimensionError("spectral_norm: empty matrix");
  if (tol <= 0) throw std::invalid_argument("spectral_norm: tolerance must be positive");
  auto M = w.mat();
  const Index n = M.cols();

  Rng rng(Rng::derive(0x73706563u, static_cast<std::uint64_t>(M.rows()),
                      static_cast<std::uint64_t>(n)));
  Vector v(n);
  for (int attempt = 0; attempt < 4; ++attempt) {
    for (Index i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
    const double nv = v.norm();
    if (nv == 0.0) continue;
    v /= nv;

    double sigma = 0.0;
    int stable = 0;
    for (int it = 0; it < max_iter; ++it) {
      Vector mv = M * v;
      const double s = mv.norm();
      if (s == 0.0) break;  // v fell in the null space; retry with a new start
      Vector w2 = M.transpose() * mv;
      const double nw = w2.norm();
      if (nw == 0.0) break;
      v = w2 / nw;
      if (std::abs(s - sigma) <= tol * std::max(1.0, s)) {
        if (++stable >= 2) return s;
      } else {
        stable = 0;
      }
      sigma = s;
    }
    if (sigma > 0.0) return sigma;
  }
  // Only an identically-zero matrix survives repeated random restarts.
  if (M.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  throw NumericalError("spectral_norm: power iteration failed to make progress");
}

LipschitzReport analytic_bound(const Network& net) {
  net.validate();
  double product = 1.0;
  for (const DenseLayer& l : net.layers) product *= spectral_norm(l.weights);
  LipschitzReport report;
  report.kind = LipschitzReport::Kind::AnalyticUpper;
  report.value = product;
  return report;
}

namespace {

struct RowBest {
  double ratio = -1.0;
  Vector delta;
};

/// Evaluates the ratio for every row of deltas against the chunk anchors,
/// folds improvements into `best`, and returns the per-row ratios.
std::vector<double> fold_ratios(const Model& f, const RowMatrix& x0, const RowMatrix& f0,
                                const RowMatrix& deltas, RatioNorms norms,
                                std::vector<RowBest>& best) {
  const Index c = x0.rows();
  std::vector<double> ratios(static_cast<std::size_t>(c), -1.0);
  Tensor xp = Tensor::zeros(c, x0.cols());
  xp.mat() = x0 + deltas;
  Tensor out = f.forward(xp);
  for (Index r = 0; r < c; ++r) {
    const double den = row_norm(deltas.row(r), norms, false);
    if (den <= 0.0) continue;
    const double num = row_norm(f0.row(r) - out.mat().row(r), norms, true);
    const double ratio = num / den;
    ratios[static_cast<std::size_t>(r)] = ratio;
    auto& b = best[static_cast<std::size_t>(r)];
    if (ratio > b.ratio) {
      b.ratio = ratio;
      b.delta = deltas.row(r).transpose();
    }
  }
  return ratios;
}

}  // namespace

LipschitzReport empirical_llc(const Model& f, const Tensor& anchors, double radius,
                              const AscentConfig& cfg) {
  cfg.validate();
  if (radius <= 0.0) throw std::invalid_argument("empirical_llc: radius must be positive");
  if (anchors.rank() != 2 || anchors.rows() == 0)
    throw std::invalid_argument("empirical_llc: anchors must be a nonempty [n x d] tensor");
  const Index n = anchors.rows();
  const Index d = anchors.cols();
  if (d != f.input_dim()) throw DimensionError("empirical_llc: anchor width vs model input");

  const double alpha = (cfg.step_size > 0.0) ? cfg.step_size : radius / 10.0;
  const bool snap = d <= cfg.corner_snap_max_dim;
  const Index total_rows = n * cfg.restarts;

  Tensor f_anchor = f.forward(anchors);  // [n x k]

  std::vector<RowBest> best(static_cast<std::size_t>(total_rows));

  for (Index chunk_start = 0; chunk_start < total_rows; chunk_start += kChunkRows) {
    const Index c = std::min(kChunkRows, total_rows - chunk_start);

    RowMatrix x0(c, d), f0(c, f_anchor.cols()), deltas(c, d), init(c, d);
    for (Index r = 0; r < c; ++r) {
      const Index row = chunk_start + r;
      const Index a = row / cfg.restarts;
      const Index j = row % cfg.restarts;
      x0.row(r) = anchors.mat().row(a);
      f0.row(r) = f_anchor.mat().row(a);
      Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(j)));
      for (Index col = 0; col < d; ++col) init(r, col) = radius * rng.sign();
    }
    deltas = init;

    std::vector<RowBest> chunk_best(static_cast<std::size_t>(c));
    for (int step = 0; step <= cfg.steps; ++step) {
      // One graph per step: its forward value scores the current iterate and
      // its backward drives the next move.
      ad::Graph g;
      ad::Var vd = g.input(Tensor::from_matrix(deltas));
      ad::Var xp = ad::add(g.constant(Tensor::from_matrix(x0)), vd);
      ad::Var out = f.forward(g, xp);
      ad::Var diff = ad::sub(g.constant(Tensor::from_matrix(f0)), out);
      std::vector<double> current(static_cast<std::size_t>(c), -1.0);
      for (Index r = 0; r < c; ++r) {
        const double den = row_norm(deltas.row(r), cfg.norms, false);
        if (den <= 0.0) continue;
        const double num = row_norm(diff.value().mat().row(r), cfg.norms, true);
        const double ratio = num / den;
        current[static_cast<std::size_t>(r)] = ratio;
        auto& b = chunk_best[static_cast<std::size_t>(r)];
        if (ratio > b.ratio) {
          b.ratio = ratio;
          b.delta = deltas.row(r).transpose();
        }
      }
      if (step == cfg.steps) break;

      ad::Var objective = (cfg.norms == RatioNorms::L1OverLinf)
                              ? ad::sum(ad::abs(diff))
                              : ad::sum(ad::mul(diff, diff));
      g.backward(objective);
      RowMatrix grad_sign = vd.grad().mat().array().sign();

      std::vector<double> snap_ratio;
      RowMatrix snap_deltas;
      if (snap) {
        // The pure sign-gradient corner is both scored and, when it already
        // beats the current iterate, adopted as the next one (monotone
        // best-response acceptance on top of the fixed-size ascent step).
        snap_deltas = radius * grad_sign;
        snap_ratio = fold_ratios(f, x0, f0, snap_deltas, cfg.norms, chunk_best);
      }

      deltas += alpha * grad_sign;
      deltas = deltas.cwiseMax(-radius).cwiseMin(radius);
      for (Index r = 0; r < c; ++r) {
        if (snap && snap_ratio[static_cast<std::size_t>(r)] > current[static_cast<std::size_t>(r)]) {
          deltas.row(r) = snap_deltas.row(r);
          continue;
        }
        const double m = deltas.row(r).cwiseAbs().maxCoeff();
        if (m == 0.0) {
          deltas.row(r) = init.row(r);  // degenerate row: restart at its corner
        } else if (m < radius * (1.0 - 1e-12)) {
          deltas.row(r) *= radius / m;
        }
      }
    }

    if (snap) {
      // Greedy one-coordinate sign flips on each row's best point catch the
      // corner maxima that plain sign ascent parks next to.
      bool improved = true;
      int passes = 0;
      while (improved && passes < 64) {
        improved = false;
        ++passes;
        for (Index j = 0; j < d; ++j) {
          RowMatrix cand(c, d);
          for (Index r = 0; r < c; ++r) cand.row(r) = chunk_best[static_cast<std::size_t>(r)].delta.transpose();
          cand.col(j) = -cand.col(j);
          std::vector<double> before(static_cast<std::size_t>(c));
          for (Index r = 0; r < c; ++r) before[static_cast<std::size_t>(r)] = chunk_best[static_cast<std::size_t>(r)].ratio;
          fold_ratios(f, x0, f0, cand, cfg.norms, chunk_best);
          for (Index r = 0; r < c; ++r) {
            if (chunk_best[static_cast<std::size_t>(r)].ratio > before[static_cast<std::size_t>(r)]) improved = true;
          }
        }
      }
    }

    for (Index r = 0; r < c; ++r)
      best[static_cast<std::size_t>(chunk_start + r)] = std::move(chunk_best[static_cast<std::size_t>(r)]);
  }

  LipschitzReport report;
  report.kind = LipschitzReport::Kind::EmpiricalLocal;
  report.radius = radius;
  report.n_samples = n;
  report.ascent = cfg;
  report.per_anchor.resize(static_cast<std::size_t>(n));
  if (cfg.keep_witnesses) report.witnesses.resize(static_cast<std::size_t>(n));

  double mean = 0.0;
  for (Index a = 0; a < n; ++a) {
    const RowBest* top = nullptr;
    for (Index j = 0; j < cfg.restarts; ++j) {
      const RowBest& b = best[static_cast<std::size_t>(a * cfg.restarts + j)];
      if (!top || b.ratio > top->ratio) top = &b;
    }
    const double ratio = std::max(top->ratio, 0.0);
    report.per_anchor[static_cast<std::size_t>(a)] = ratio;
    if (cfg.keep_witnesses) {
      Witness w;
      w.anchor = Tensor::zeros(d);
      w.anchor.vec() = anchors.mat().row(a).transpose();
      w.adversarial = Tensor::zeros(d);
      if (top->delta.size() == d)
        w.adversarial.vec() = anchors.mat().row(a).transpose() + top->delta;
      else
        w.adversarial.vec() = w.anchor.vec();
      w.ratio = ratio;
      report.witnesses[static_cast<std::size_t>(a)] = std::move(w);
    }
    mean += ratio;
  }
  report.value = mean / static_cast<double>(n);
  return report;
}

LipschitzReport empirical_llc(const Model& f, const std::vector<Tensor>& anchors,
                              double radius, const AscentConfig& cfg) {
  if (anchors.empty()) throw std::invalid_argument("empirical_llc: no anchors");
  Tensor stacked = Tensor::zeros(static_cast<Index>(anchors.size()), anchors.front().size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (anchors[i].rank() != 1 || anchors[i].size() != stacked.cols())
      throw DimensionError("empirical_llc: anchors must be rank-1 of equal size");
    stacked.mat().row(static_cast<Index>(i)) = anchors[i].vec().transpose();
  }
  return empirical_llc(f, stacked, radius, cfg);
}

std::string LipschitzReport::to_json_line(bool include_witnesses) const {
  nlohmann::ordered_json j;
  j["kind"] = (kind == Kind::AnalyticUpper) ? "analytic_upper" : "empirical_local";
  j["value"] = value;
  if (kind == Kind::EmpiricalLocal) {
    j["radius"] = radius;
    j["n_samples"] = n_samples;
    j["config"] = {{"steps", ascent.steps},
                   {"restarts", ascent.restarts},
                   {"step_size", ascent.step_size},
                   {"seed", ascent.seed},
                   {"norms", ascent.norms == RatioNorms::L1OverLinf ? "l1_over_linf"
                                                                    : "l2_over_l2"}};
    if (include_witnesses && !witnesses.empty()) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const Witness& w : witnesses) {
        nlohmann::ordered_json jw;
        jw["ratio"] = w.ratio;
        jw["anchor"] = std::vector<double>(w.anchor.data(), w.anchor.data() + w.anchor.size());
        jw["adversarial"] = std::vector<double>(w.adversarial.data(),
                                                w.adversarial.data() + w.adversarial.size());
        arr.push_back(std::move(jw));
      }
      j["witnesses"] = std::move(arr);
    }
  }
  return j.dump();
}

}  // namespace lipens
