#include "lipens/ensemble.hpp"

#include "lipens/errors.hpp"
#include "lipens/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace lipens {

namespace {

constexpr double kWeightSumTol = 1e-12;
constexpr double kOrderTol = 1e-12;

void require_members_compatible(const std::vector<Network>& members) {
  if (members.empty()) throw std::invalid_argument("ensemble: no members");
  const Index d = members.front().input_dim();
  const Index k = members.front().output_dim();
  for (const Network& m : members) {
    m.validate();
    if (m.input_dim() != d || m.output_dim() != k)
      throw DimensionError("ensemble: members disagree on input/output dimensions");
  }
}

std::vector<double> values_of(const std::vector<LipschitzReport>& reports) {
  std::vector<double> ell;
  ell.reserve(reports.size());
  for (const LipschitzReport& r : reports) ell.push_back(r.value);
  return ell;
}

}  // namespace

const char* weight_mode_name(WeightMode mode) {
  switch (mode) {
    case WeightMode::Proposed: return "proposed";
    case WeightMode::Equal: return "equal";
    case WeightMode::Reverse: return "reverse";
  }
  return "?";
}

WeightMode weight_mode_from_name(const std::string& name) {
  if (name == "proposed") return WeightMode::Proposed;
  if (name == "equal") return WeightMode::Equal;
  if (name == "reverse") return WeightMode::Reverse;
  throw std::invalid_argument("unknown weight mode '" + name + "' (proposed|equal|reverse)");
}

void BaggingWeights::validate() const {
  if (w.size() == 0) throw std::invalid_argument("BaggingWeights: empty");
  for (Index i = 0; i < w.size(); ++i) {
    if (!(w[i] >= 0.0)) throw std::invalid_argument("BaggingWeights: negative or NaN weight");
  }
  if (std::abs(w.sum() - 1.0) > kWeightSumTol)
    throw std::invalid_argument("BaggingWeights: weights must sum to 1");
}

double bagged_lc(const std::vector<double>& ell, const BaggingWeights& weights) {
  weights.validate();
  if (static_cast<Index>(ell.size()) != weights.w.size())
    throw DimensionError("bagged_lc: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < ell.size(); ++i) {
    if (ell[i] < 0.0) throw std::invalid_argument("bagged_lc: negative member constant");
    acc += weights.w[static_cast<Index>(i)] * ell[i];
  }
  return acc;
}

double stacked_lc(const std::vector<double>& ell, double lg) {
  if (lg < 0.0) throw std::invalid_argument("stacked_lc: negative meta constant");
  double ss = 0.0;
  for (double l : ell) {
    if (l < 0.0) throw std::invalid_argument("stacked_lc: negative member constant");
    ss += l * l;
  }
  return lg * std::sqrt(ss);
}

BaggingWeights choose_bagging_weights(const std::vector<double>& ell, WeightMode mode) {
  if (ell.empty()) throw std::invalid_argument("choose_bagging_weights: empty constants");
  for (double l : ell) {
    if (!(l > 0.0)) throw std::invalid_argument("choose_bagging_weights: constants must be positive");
  }
  const Index n = static_cast<Index>(ell.size());
  BaggingWeights out;
  out.w.resize(n);

  if (mode == WeightMode::Equal) {
    out.w.setConstant(1.0 / static_cast<double>(n));
    return out;
  }

  Vector proposed(n);
  double z = 0.0;
  for (Index i = 0; i < n; ++i) z += 1.0 / ell[static_cast<std::size_t>(i)];
  for (Index i = 0; i < n; ++i) proposed[i] = (1.0 / ell[static_cast<std::size_t>(i)]) / z;

  if (mode == WeightMode::Proposed) {
    out.w = proposed;
    return out;
  }

  // Reverse: rank members by ascending constant and hand the sorted-descending
  // proposed weights out in the opposite order, so the largest weight lands on
  // the largest constant.
  std::vector<Index> by_ell(static_cast<std::size_t>(n));
  std::iota(by_ell.begin(), by_ell.end(), Index{0});
  std::stable_sort(by_ell.begin(), by_ell.end(), [&ell](Index a, Index b) {
    return ell[static_cast<std::size_t>(a)] < ell[static_cast<std::size_t>(b)];
  });
  std::vector<double> desc(proposed.data(), proposed.data() + n);
  std::sort(desc.begin(), desc.end(), std::greater<>());
  for (Index r = 0; r < n; ++r)
    out.w[by_ell[static_cast<std::size_t>(r)]] = desc[static_cast<std::size_t>(n - 1 - r)];
  return out;
}

MajorizationVerdict check_majorization(const std::vector<double>& ell_desc,
                                       const std::vector<double>& w_desc,
                                       const std::vector<double>& wprime_desc) {
  const std::size_t n = ell_desc.size();
  if (w_desc.size() != n || wprime_desc.size() != n)
    throw DimensionError("check_majorization: length mismatch");
  if (n == 0) throw std::invalid_argument("check_majorization: empty input");
  auto require_descending = [](const std::vector<double>& v, const char* name) {
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] > v[i - 1] + kOrderTol)
        throw std::invalid_argument(std::string("check_majorization: ") + name +
                                    " is not sorted descending");
    }
  };
  require_descending(ell_desc, "ell");
  require_descending(w_desc, "w");
  require_descending(wprime_desc, "w'");

  double sw = 0.0, swp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w_desc[i];
    swp += wprime_desc[i];
  }
  if (std::abs(sw - swp) > 1e-9)
    throw std::invalid_argument("check_majorization: weight sums differ");

  MajorizationVerdict v;
  v.comparable = true;
  double pw = 0.0, pwp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pw += w_desc[i];
    pwp += wprime_desc[i];
    if (pw < pwp - kOrderTol) {
      v.comparable = false;
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    v.lhs += ell_desc[i] * w_desc[i];
    v.rhs += ell_desc[i] * wprime_desc[i];
  }
  v.inequality_holds = v.lhs >= v.rhs - kOrderTol;
  return v;
}

std::vector<double> EnsembleModel::member_llc_values() const { return values_of(member_llc); }

void EnsembleModel::validate() const {
  require_members_compatible(members);
  if (kind == Kind::Bagged) {
    weights.validate();
    if (weights.w.size() != static_cast<Index>(members.size()))
      throw DimensionError("EnsembleModel: weight count vs member count");
  } else {
    meta.validate();
    const Index n = static_cast<Index>(members.size());
    const Index k = members.front().output_dim();
    if (meta.input_dim() != n * k)
      throw DimensionError("EnsembleModel: meta input must be member count x class count");
    if (meta.output_dim() != k)
      throw DimensionError("EnsembleModel: meta output must match class count");
    if (certified_lg < 0.0) throw std::invalid_argument("EnsembleModel: negative certified_lg");
  }
}

Index EnsembleModel::input_dim() const { return members.front().input_dim(); }

Index EnsembleModel::output_dim() const {
  return kind == Kind::Stacked ? meta.output_dim() : members.front().output_dim();
}

Tensor EnsembleModel::forward(const Tensor& x) const {
  if (kind == Kind::Bagged) {
    Tensor acc = lipens::forward(members.front(), x);
    acc.vec() *= weights.w[0];
    for (std::size_t i = 1; i < members.size(); ++i) {
      Tensor yi = lipens::forward(members[i], x);
      acc.vec() += weights.w[static_cast<Index>(i)] * yi.vec();
    }
    return acc;
  }
  // Stacked: meta over member logits, concatenated in registration order.
  const Index k = members.front().output_dim();
  if (x.rank() == 1) {
    Tensor stacked = Tensor::zeros(static_cast<Index>(members.size()) * k);
    for (std::size_t i = 0; i < members.size(); ++i)
      stacked.vec().segment(static_cast<Index>(i) * k, k) = lipens::forward(members[i], x).vec();
    return lipens::forward(meta, stacked);
  }
  Tensor stacked = Tensor::zeros(x.rows(), static_cast<Index>(members.size()) * k);
  for (std::size_t i = 0; i < members.size(); ++i)
    stacked.mat().middleCols(static_cast<Index>(i) * k, k) =
        lipens::forward(members[i], x).mat();
  return lipens::forward(meta, stacked);
}

ad::Var EnsembleModel::forward(ad::Graph& g, ad::Var x) const {
  if (kind == Kind::Bagged) {
    ad::Var acc = ad::scale(lipens::forward(g, members.front(), x), weights.w[0]);
    for (std::size_t i = 1; i < members.size(); ++i) {
      acc = ad::add(acc, ad::scale(lipens::forward(g, members[i], x),
                                   weights.w[static_cast<Index>(i)]));
    }
    return acc;
  }
  std::vector<ad::Var> outs;
  outs.reserve(members.size());
  for (const Network& m : members) outs.push_back(lipens::forward(g, m, x));
  return lipens::forward(g, meta, ad::concat(outs));
}

Tensor ensemble_forward(const EnsembleModel& model, const Tensor& x) { return model.forward(x); }

LipschitzReport empirical_llc_ensemble(const EnsembleModel& model, const Tensor& anchors,
                                       double radius, const AscentConfig& cfg) {
  return empirical_llc(model, anchors, radius, cfg);
}

namespace {

std::vector<LipschitzReport> measure_members(const std::vector<Network>& members,
                                             const Tensor& anchors, double radius,
                                             const AscentConfig& ascent) {
  std::vector<LipschitzReport> reports;
  reports.reserve(members.size());
  for (const Network& m : members)
    reports.push_back(empirical_llc(NetworkModel(m), anchors, radius, ascent));
  return reports;
}

}  // namespace

EnsembleModel build_bagged(std::vector<Network> members,
                           std::vector<LipschitzReport> member_reports, double radius,
                           WeightMode mode) {
  require_members_compatible(members);
  if (member_reports.size() != members.size())
    throw DimensionError("build_bagged: one report per member required");

  EnsembleModel model;
  model.kind = EnsembleModel::Kind::Bagged;
  model.mode = mode;
  model.members = std::move(members);
  model.member_llc = std::move(member_reports);
  model.llc_radius = radius;
  const std::vector<double> ell = model.member_llc_values();
  model.weights = choose_bagging_weights(ell, mode);
  model.certificate = bagged_lc(ell, model.weights);
  model.validate();
  return model;
}

EnsembleModel build_bagged(std::vector<Network> members, const Tensor& anchors, double radius,
                           WeightMode mode, const AscentConfig& ascent) {
  require_members_compatible(members);
  std::vector<LipschitzReport> reports = measure_members(members, anchors, radius, ascent);
  return build_bagged(std::move(members), std::move(reports), radius, mode);
}

EnsembleModel build_stacked(std::vector<Network> members,
                            std::vector<LipschitzReport> member_reports, double radius,
                            WeightMode mode, const LabeledDataset& heldout,
                            const StackedOptions& options) {
  require_members_compatible(members);
  if (member_reports.size() != members.size())
    throw DimensionError("build_stacked: one report per member required");
  if (mode == WeightMode::Equal)
    throw std::invalid_argument("build_stacked: mode must be proposed or reverse");
  heldout.validate();
  if (heldout.size() < 2)
    throw std::invalid_argument("build_stacked: insufficient held-out data");
  if (heldout.dim() != members.front().input_dim())
    throw DimensionError("build_stacked: held-out width vs member input");

  const Index n = static_cast<Index>(members.size());
  const Index k = members.front().output_dim();

  // Meta-learner training set: concatenated frozen member logits.
  LabeledDataset meta_data;
  meta_data.inputs = Tensor::zeros(heldout.size(), n * k);
  for (Index i = 0; i < n; ++i)
    meta_data.inputs.mat().middleCols(i * k, k) =
        lipens::forward(members[static_cast<std::size_t>(i)], heldout.inputs).mat();
  meta_data.labels = heldout.labels;
  meta_data.class_count = heldout.class_count;

  Network meta = make_fnn_layers(2, n * k, k, options.meta_hidden,
                                 Rng::derive(options.meta_train.rng_seed, 0x6d657461ull));
  meta = train(std::move(meta), meta_data, options.meta_train).net;

  const std::vector<double> ell = values_of(member_reports);
  double sum_sq = 0.0, lmin = ell.front();
  for (double l : ell) {
    if (!(l > 0.0))
      throw std::invalid_argument("build_stacked: member constants must be positive");
    sum_sq += l * l;
    lmin = std::min(lmin, l);
  }
  const double budget = lmin / std::sqrt(sum_sq);
  const double target =
      (mode == WeightMode::Proposed) ? options.proposed_safety * budget
                                     : options.reverse_factor * budget;

  const double bound = analytic_bound(meta).value;
  if (!(bound > 0.0)) throw NumericalError("build_stacked: degenerate (zero) meta weights");
  const double s = std::pow(target / bound, 1.0 / static_cast<double>(meta.layers.size()));
  double bias_scale = 1.0;
  for (DenseLayer& l : meta.layers) {
    l.weights.vec() *= s;
    bias_scale *= s;
    l.bias.vec() *= bias_scale;  // keeps the rescaled meta's argmax identical
  }
  const double achieved = analytic_bound(meta).value;
  if (std::abs(achieved - target) > 1e-9 * std::max(1.0, target))
    throw NumericalError("build_stacked: rescaled meta missed its Lipschitz target");

  EnsembleModel model;
  model.kind = EnsembleModel::Kind::Stacked;
  model.mode = mode;
  model.members = std::move(members);
  model.meta = std::move(meta);
  model.certified_lg = achieved;
  model.member_llc = std::move(member_reports);
  model.llc_radius = radius;
  model.certificate = stacked_lc(ell, achieved);
  model.validate();
  return model;
}

EnsembleModel build_stacked(std::vector<Network> members, const Tensor& anchors, double radius,
                            WeightMode mode, const LabeledDataset& heldout,
                            const StackedOptions& options, const AscentConfig& ascent) {
  require_members_compatible(members);
  std::vector<LipschitzReport> reports = measure_members(members, anchors, radius, ascent);
  return build_stacked(std::move(members), std::move(reports), radius, mode, heldout, options);
}

namespace {

nlohmann::ordered_json report_to_json(const LipschitzReport& r) {
  return nlohmann::ordered_json::parse(r.to_json_line(false));
}

LipschitzReport report_from_json(const nlohmann::json& j) {
  LipschitzReport r;
  r.kind = (j.at("kind").get<std::string>() == "analytic_upper")
               ? LipschitzReport::Kind::AnalyticUpper
               : LipschitzReport::Kind::EmpiricalLocal;
  r.value = j.at("value").get<double>();
  if (r.kind == LipschitzReport::Kind::EmpiricalLocal) {
    r.radius = j.at("radius").get<double>();
    r.n_samples = j.at("n_samples").get<Index>();
    const auto& c = j.at("config");
    r.ascent.steps = c.at("steps").get<int>();
    r.ascent.restarts = c.at("restarts").get<int>();
    r.ascent.step_size = c.at("step_size").get<double>();
    r.ascent.seed = c.at("seed").get<std::uint64_t>();
    r.ascent.norms = (c.at("norms").get<std::string>() == "l2_over_l2")
                         ? RatioNorms::L2OverL2
                         : RatioNorms::L1OverLinf;
  }
  return r;
}

}  // namespace

void save_ensemble(const EnsembleModel& model, const std::string& manifest_path) {
  model.validate();
  namespace fs = std::filesystem;
  const fs::path manifest(manifest_path);
  const fs::path dir = manifest.parent_path().empty() ? fs::path(".") : manifest.parent_path();
  const std::string stem = manifest.stem().string();

  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["kind"] = (model.kind == EnsembleModel::Kind::Bagged) ? "bagged" : "stacked";
  j["mode"] = weight_mode_name(model.mode);

  std::vector<std::string> member_files;
  for (std::size_t i = 0; i < model.members.size(); ++i) {
    const std::string name = stem + ".member" + std::to_string(i) + ".net";
    save_network(model.members[i], (dir / name).string());
    member_files.push_back(name);
  }
  j["members"] = member_files;

  if (model.kind == EnsembleModel::Kind::Bagged) {
    j["weights"] = std::vector<double>(model.weights.w.data(),
                                       model.weights.w.data() + model.weights.w.size());
  } else {
    const std::string meta_name = stem + ".meta.net";
    save_network(model.meta, (dir / meta_name).string());
    j["meta"] = meta_name;
    j["certified_lg"] = model.certified_lg;
  }

  nlohmann::ordered_json reports = nlohmann::ordered_json::array();
  for (const LipschitzReport& r : model.member_llc) reports.push_back(report_to_json(r));
  j["member_llc"] = std::move(reports);
  j["llc_radius"] = model.llc_radius;
  j["certificate"] = model.certificate;

  std::ofstream out(manifest_path);
  if (!out) throw ParseError("save_ensemble: cannot open '" + manifest_path + "'");
  out << j.dump(2) << "\n";
  if (!out) throw ParseError("save_ensemble: write failed");
}

EnsembleModel load_ensemble(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw ParseError("load_ensemble: cannot open '" + manifest_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("load_ensemble: malformed manifest: ") + e.what());
  }

  const fs::path dir = fs::path(manifest_path).parent_path().empty()
                           ? fs::path(".")
                           : fs::path(manifest_path).parent_path();
  EnsembleModel model;
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw ParseError("load_ensemble: unsupported schema version");
    model.kind = (j.at("kind").get<std::string>() == "bagged") ? EnsembleModel::Kind::Bagged
                                                               : EnsembleModel::Kind::Stacked;
    model.mode = weight_mode_from_name(j.at("mode").get<std::string>());
    for (const auto& name : j.at("members"))
      model.members.push_back(load_network((dir / name.get<std::string>()).string()));
    if (model.kind == EnsembleModel::Kind::Bagged) {
      const auto w = j.at("weights").get<std::vector<double>>();
      model.weights.w = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
    } else {
      model.meta = load_network((dir / j.at("meta").get<std::string>()).string());
      model.certified_lg = j.at("certified_lg").get<double>();
    }
    for (const auto& rj : j.at("member_llc")) model.member_llc.push_back(report_from_json(rj));
    model.llc_radius = j.at("llc_radius").get<double>();
    model.certificate = j.at("certificate").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("load_ensemble: malformed manifest: ") + e.what());
  }

  model.validate();
  // Integrity: the stored certificate must reproduce from the stored parts.
  const std::vector<double> ell = model.member_llc_values();
  const double expect = (model.kind == EnsembleModel::Kind::Bagged)
                            ? bagged_lc(ell, model.weights)
                            : stacked_lc(ell, model.certified_lg);
  if (std::abs(expect - model.certificate) > 1e-9 * std::max(1.0, expect))
    throw ParseError("load_ensemble: certificate does not match stored constants");
  return model;
}

}  // namespace lipens
