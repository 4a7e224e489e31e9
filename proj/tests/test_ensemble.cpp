#include "lipens/ensemble.hpp"
#include "lipens/errors.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <vector>

using namespace lipens;
using test::mat;
using test::vec;

TEST_SUITE_BEGIN("ensemble");

namespace {

BaggingWeights weights_of(std::initializer_list<double> v) {
  BaggingWeights b;
  b.w.resize(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) b.w[i++] = x;
  return b;
}

LipschitzReport fake_report(double value, double radius = 0.1) {
  LipschitzReport r;
  r.kind = LipschitzReport::Kind::EmpiricalLocal;
  r.value = value;
  r.radius = radius;
  r.n_samples = 1;
  return r;
}

Tensor random_anchors(Rng& rng, Index n, Index d, double scale = 0.8) {
  Tensor t = Tensor::zeros(n, d);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("bagged constant combines linearly") {
  CHECK(bagged_lc({2, 4}, weights_of({0.5, 0.5})) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(bagged_lc({2, 4}, weights_of({1.0, 0.0})) == doctest::Approx(2.0).epsilon(1e-12));
  // equal constants with uniform weights collapse to the single-network value
  CHECK(bagged_lc({7.5, 7.5, 7.5}, weights_of({1.0 / 3, 1.0 / 3, 1.0 / 3})) ==
        doctest::Approx(7.5).epsilon(1e-12));

  CHECK_THROWS_AS(bagged_lc({1, 2, 3}, weights_of({0.5, 0.5})), DimensionError);
  CHECK_THROWS_AS(bagged_lc({1, 2}, weights_of({0.7, 0.7})), std::invalid_argument);
  CHECK_THROWS_AS(bagged_lc({1, 2}, weights_of({1.5, -0.5})), std::invalid_argument);
}

TEST_CASE("stacked constant follows the root-sum-square rule") {
  CHECK(stacked_lc({3, 4}, 1.0) == doctest::Approx(5.0).epsilon(1e-12));
  // n equal constants with lg = 1/sqrt(n) reproduce the single-network value
  const double L = 6.25;
  CHECK(stacked_lc({L, L, L, L}, 0.5) == doctest::Approx(L).epsilon(1e-12));

  CHECK_THROWS_AS(stacked_lc({1, 2}, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(stacked_lc({1, -2}, 0.1), std::invalid_argument);
}

TEST_CASE("reference member constants give the expected admissible budget") {
  // local constants of three MNIST feed-forward classifiers of growing depth
  const std::vector<double> ell = {24.23, 18.59, 12.45};
  const double rss = std::sqrt(ell[0] * ell[0] + ell[1] * ell[1] + ell[2] * ell[2]);
  CHECK(rss == doctest::Approx(32.98).epsilon(2e-4));
  const double budget = 12.45 / rss;
  CHECK(budget == doctest::Approx(0.3775).epsilon(3e-4));
  CHECK(stacked_lc(ell, budget) == doctest::Approx(12.45).epsilon(1e-9));
  // the proposed construction's target sits 5% inside the budget
  CHECK(0.95 * budget == doctest::Approx(0.3586).epsilon(3e-4));
}

TEST_CASE("weight selection modes") {
  {
    BaggingWeights w = choose_bagging_weights({2, 2}, WeightMode::Proposed);
    CHECK(w.w[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w.w[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  {
    const std::vector<double> ell = {24.23, 18.59, 12.45};
    BaggingWeights w = choose_bagging_weights(ell, WeightMode::Proposed);
    CHECK(w.w[0] == doctest::Approx(0.2353).epsilon(2e-4));
    CHECK(w.w[1] == doctest::Approx(0.3067).epsilon(2e-4));
    CHECK(w.w[2] == doctest::Approx(0.4580).epsilon(2e-4));

    // harmonic-mean identity: every w_i * l_i is equal, so the certificate
    // is n / sum(1/l_i)
    const double z = 1 / 24.23 + 1 / 18.59 + 1 / 12.45;
    const double cert = bagged_lc(ell, w);
    CHECK(cert == doctest::Approx(3.0 / z).epsilon(1e-12));
    CHECK(cert == doctest::Approx(17.11).epsilon(5e-4));
  }
  {
    BaggingWeights w = choose_bagging_weights({1, 2, 3}, WeightMode::Reverse);
    CHECK(w.w[2] > w.w[1]);
    CHECK(w.w[1] > w.w[0]);
    // the multiset is the proposed one, reassigned
    BaggingWeights p = choose_bagging_weights({1, 2, 3}, WeightMode::Proposed);
    std::vector<double> a(p.w.data(), p.w.data() + 3), b(w.w.data(), w.w.data() + 3);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  {
    BaggingWeights w = choose_bagging_weights({5, 1, 3, 9}, WeightMode::Equal);
    for (Index i = 0; i < 4; ++i) CHECK(w.w[i] == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK_THROWS_AS(choose_bagging_weights({1, 0}, WeightMode::Proposed), std::invalid_argument);
  CHECK_THROWS_AS(choose_bagging_weights({1, -1}, WeightMode::Equal), std::invalid_argument);
}

TEST_CASE("weight selection is scale-free") {
  Rng rng(88);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> ell;
    for (int i = 0; i < 4; ++i) ell.push_back(rng.uniform(0.2, 9.0));
    const double c = rng.uniform(0.1, 20.0);
    std::vector<double> scaled = ell;
    for (double& l : scaled) l *= c;
    BaggingWeights a = choose_bagging_weights(ell, WeightMode::Proposed);
    BaggingWeights b = choose_bagging_weights(scaled, WeightMode::Proposed);
    CHECK((a.w - b.w).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("majorization verdicts on fixed vectors") {
  {
    MajorizationVerdict v = check_majorization({3, 2, 1}, {1, 0, 0}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    CHECK(v.comparable);
    CHECK(v.inequality_holds);
    CHECK(v.lhs == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(v.rhs == doctest::Approx(2.0).epsilon(1e-12));
  }
  {
    MajorizationVerdict v = check_majorization({5, 4, 2}, {0.5, 0.3, 0.2}, {0.5, 0.3, 0.2});
    CHECK(v.comparable);
    CHECK(v.inequality_holds);
    CHECK(v.lhs == doctest::Approx(v.rhs).epsilon(1e-15));
  }
  CHECK_THROWS_AS(check_majorization({1, 2}, {0.5, 0.5}, {0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(check_majorization({2, 1}, {0.3, 0.7}, {0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(check_majorization({2, 1}, {0.6, 0.4}, {0.5, 0.2}), std::invalid_argument);
}

TEST_CASE("majorization inequality over a coarse simplex grid") {
  Rng rng(3000);
  std::vector<double> ell = {rng.uniform(5, 9), rng.uniform(2, 5), rng.uniform(0.1, 2)};
  std::sort(ell.begin(), ell.end(), std::greater<>());

  const int steps = 10;  // grid step 0.1
  std::vector<std::array<int, 3>> grid;
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; i + j <= steps; ++j) grid.push_back({i, j, steps - i - j});

  int comparable = 0;
  for (const auto& wi : grid) {
    for (const auto& wj : grid) {
      std::vector<double> w = {wi[0] / 10.0, wi[1] / 10.0, wi[2] / 10.0};
      std::vector<double> wp = {wj[0] / 10.0, wj[1] / 10.0, wj[2] / 10.0};
      std::sort(w.begin(), w.end(), std::greater<>());
      std::sort(wp.begin(), wp.end(), std::greater<>());
      MajorizationVerdict v = check_majorization(ell, w, wp);
      if (v.comparable) {
        ++comparable;
        CHECK(v.lhs >= v.rhs - 1e-12);
      }
    }
  }
  CHECK(comparable > 100);
}

TEST_CASE("build_bagged wires weights and certificates") {
  Rng rng(12);
  Network base = test::random_net(rng, {3, 5, 2});
  {
    std::vector<Network> members = {base, base};
    Tensor anchors = random_anchors(rng, 2, 3);
    EnsembleModel m = build_bagged(members, anchors, 0.1, WeightMode::Proposed);
    CHECK(m.weights.w[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(m.weights.w[1] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(m.kind == EnsembleModel::Kind::Bagged);
  }
  {
    std::vector<Network> members = {base, test::random_net(rng, {3, 5, 2})};
    EnsembleModel m = build_bagged(members, {fake_report(2), fake_report(4)}, 0.1,
                                   WeightMode::Proposed);
    CHECK(m.certificate == doctest::Approx(8.0 / 3.0).epsilon(1e-12));

    EnsembleModel eq = build_bagged(members, {fake_report(2), fake_report(4)}, 0.1,
                                    WeightMode::Equal);
    CHECK(eq.certificate == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_CASE("bagged forward is the weighted member sum") {
  Rng rng(9);
  std::vector<Network> members = {test::random_net(rng, {4, 6, 3}),
                                  test::random_net(rng, {4, 6, 3})};
  {
    // weight 1 on member 0: identical logits
    EnsembleModel m = build_bagged(members, {fake_report(1), fake_report(2)}, 0.1,
                                   WeightMode::Proposed);
    m.weights = weights_of({1.0, 0.0});
    Tensor x = test::random_vector(rng, 4);
    CHECK((m.forward(x).vec() - forward(members[0], x).vec()).cwiseAbs().maxCoeff() == 0.0);
  }
  {
    // straight-line re-evaluation of the weighted sum
    EnsembleModel m = build_bagged(members, {fake_report(3), fake_report(5)}, 0.1,
                                   WeightMode::Proposed);
    Tensor x = test::random_vector(rng, 4);
    Vector expect = m.weights.w[0] * forward(members[0], x).vec() +
                    m.weights.w[1] * forward(members[1], x).vec();
    CHECK((ensemble_forward(m, x).vec() - expect).cwiseAbs().maxCoeff() <= 1e-12);

    // batch path agrees with the single-sample path
    Tensor batch = random_anchors(rng, 3, 4);
    Tensor yb = m.forward(batch);
    for (Index r = 0; r < 3; ++r) {
      Tensor row = Tensor::zeros(4);
      row.vec() = batch.mat().row(r).transpose();
      CHECK((yb.mat().row(r).transpose() - m.forward(row).vec()).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("stacked forward with an averaging identity meta equals equal-weight bagging") {
  Rng rng(14);
  const Index k = 3, n = 2;
  std::vector<Network> members = {test::random_net(rng, {5, 6, k}),
                                  test::random_net(rng, {5, 6, k})};

  EnsembleModel m;
  m.kind = EnsembleModel::Kind::Stacked;
  m.mode = WeightMode::Proposed;
  m.members = members;
  Tensor w = Tensor::zeros(k, n * k);
  for (Index i = 0; i < n; ++i) w.mat().middleCols(i * k, k).setIdentity();
  w.vec() *= 1.0 / static_cast<double>(n);
  m.meta = test::linear_net(w);
  m.member_llc = {fake_report(1), fake_report(1)};
  m.certified_lg = analytic_bound(m.meta).value;
  m.certificate = stacked_lc(m.member_llc_values(), m.certified_lg);
  m.validate();

  EnsembleModel bag = build_bagged(members, {fake_report(1), fake_report(1)}, 0.1,
                                   WeightMode::Equal);
  Tensor x = test::random_vector(rng, 5);
  CHECK((m.forward(x).vec() - bag.forward(x).vec()).cwiseAbs().maxCoeff() <= 1e-15);
}

namespace {

struct StackedFixture {
  std::vector<Network> members;
  LabeledDataset heldout;
  Tensor anchors;
  StackedOptions options;
};

StackedFixture make_stacked_fixture(std::uint64_t seed) {
  StackedFixture f;
  Rng rng(seed);
  f.members = {test::random_net(rng, {2, 6, 2}), test::random_net(rng, {2, 8, 2}),
               test::random_net(rng, {2, 4, 2})};
  f.heldout = make_blobs(80, 0.06, seed);
  f.heldout.split_tag = LabeledDataset::Split::Heldout;
  f.anchors = random_anchors(rng, 3, 2, 0.4);
  f.options.meta_train.epochs = 3;
  f.options.meta_train.batch_size = 16;
  f.options.meta_train.rng_seed = seed;
  return f;
}

}  // namespace

TEST_CASE("build_stacked certifies the meta constant") {
  StackedFixture f = make_stacked_fixture(1);

  EnsembleModel prop = build_stacked(f.members, f.anchors, 0.1, WeightMode::Proposed,
                                     f.heldout, f.options);
  const std::vector<double> ell = prop.member_llc_values();
  const double lmin = *std::min_element(ell.begin(), ell.end());
  double rss = 0.0;
  for (double l : ell) rss += l * l;
  rss = std::sqrt(rss);

  // the post-rescale analytic bound hits the target within 1e-9
  CHECK(std::abs(analytic_bound(prop.meta).value - prop.certified_lg) <= 1e-9);
  CHECK(prop.certified_lg ==
        doctest::Approx(0.95 * lmin / rss).epsilon(1e-9));
  // certified lg stays inside the admissible budget
  CHECK(prop.certified_lg <= lmin / rss + 1e-12);
  // the certificate beats the best member
  CHECK(prop.certificate <= lmin + 1e-12);

  EnsembleModel rev = build_stacked(f.members, f.anchors, 0.1, WeightMode::Reverse, f.heldout,
                                    f.options);
  CHECK(rev.certificate > lmin);
  CHECK(rev.certified_lg > lmin / rss);

  // both metas are rescalings of the same trained network, so the bias
  // co-scaling must preserve every prediction
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor x = test::random_vector(rng, 2, 0.6);
    CHECK(predict(prop.forward(x)) == predict(rev.forward(x)));
  }

  CHECK_THROWS_AS(build_stacked(f.members, f.anchors, 0.1, WeightMode::Equal, f.heldout,
                                f.options),
                  std::invalid_argument);

  LabeledDataset tiny;
  tiny.inputs = Tensor::zeros(1, 2);
  tiny.labels = {0};
  tiny.class_count = 2;
  CHECK_THROWS_AS(build_stacked(f.members, f.anchors, 0.1, WeightMode::Proposed, tiny,
                                f.options),
                  std::invalid_argument);
}

TEST_CASE("equal members make the proposed stacked target 0.95/sqrt(n)") {
  Rng rng(21);
  Network base = test::random_net(rng, {2, 5, 2});
  StackedFixture f = make_stacked_fixture(5);
  std::vector<Network> members = {base, base, base};

  const double L = 3.0;
  EnsembleModel m = build_stacked(members, {fake_report(L), fake_report(L), fake_report(L)},
                                  0.1, WeightMode::Proposed, f.heldout, f.options);
  CHECK(m.certified_lg == doctest::Approx(0.95 / std::sqrt(3.0)).epsilon(1e-9));
  CHECK(m.certificate == doctest::Approx(0.95 * L).epsilon(1e-9));
}

TEST_CASE("llc of degenerate ensembles reduces to the member estimate") {
  Rng rng(2025);
  Network base = test::random_net(rng, {3, 6, 2});
  Tensor anchors = random_anchors(rng, 2, 3);

  LipschitzReport solo = empirical_llc(NetworkModel(base), anchors, 0.1);
  {
    // two identical members, any weights summing to one
    std::vector<Network> members = {base, base};
    EnsembleModel m = build_bagged(members, {fake_report(1), fake_report(1)}, 0.1,
                                   WeightMode::Proposed);
    m.weights = weights_of({0.3, 0.7});
    LipschitzReport ens = empirical_llc_ensemble(m, anchors, 0.1);
    CHECK(ens.value == doctest::Approx(solo.value).epsilon(0.01));
  }
  {
    // weight (1, 0) is literally the member map
    std::vector<Network> members = {base, test::random_net(rng, {3, 6, 2})};
    EnsembleModel m = build_bagged(members, {fake_report(1), fake_report(1)}, 0.1,
                                   WeightMode::Proposed);
    m.weights = weights_of({1.0, 0.0});
    LipschitzReport ens = empirical_llc_ensemble(m, anchors, 0.1);
    CHECK(ens.value == doctest::Approx(solo.value).epsilon(1e-12));
  }
}

TEST_CASE("bagging certificates dominate matched-norm ensemble estimates") {
  Rng rng(606060);
  for (int trial = 0; trial < 10; ++trial) {
    const Index d = 2 + rng.uniform_int(4);
    const Index k = 2 + rng.uniform_int(3);
    const int n = 2 + static_cast<int>(rng.uniform_int(2));
    std::vector<Network> members;
    for (int i = 0; i < n; ++i)
      members.push_back(test::random_net(rng, {d, 2 + rng.uniform_int(6), k}));
    Tensor anchors = random_anchors(rng, 3, d);

    AscentConfig cfg;
    cfg.norms = RatioNorms::L2OverL2;

    std::vector<double> member_est;
    for (const Network& m : members)
      member_est.push_back(empirical_llc(NetworkModel(m), anchors, 0.1, cfg).value);

    std::vector<LipschitzReport> reports;
    for (double v : member_est) reports.push_back(fake_report(std::max(v, 1e-9)));
    EnsembleModel bag = build_bagged(members, reports, 0.1, WeightMode::Proposed);
    const double ens = empirical_llc_ensemble(bag, anchors, 0.1, cfg).value;

    double rhs = 0.0;
    for (std::size_t i = 0; i < member_est.size(); ++i)
      rhs += bag.weights.w[static_cast<Index>(i)] * member_est[i];
    CHECK(ens <= rhs * 1.01);
  }
}

TEST_CASE("stacking certificates dominate matched-norm ensemble estimates") {
  Rng rng(717171);
  for (int trial = 0; trial < 10; ++trial) {
    const Index d = 2 + rng.uniform_int(4);
    const Index k = 2;
    const int n = 2;
    std::vector<Network> members;
    for (int i = 0; i < n; ++i)
      members.push_back(test::random_net(rng, {d, 2 + rng.uniform_int(5), k}));
    Tensor anchors = random_anchors(rng, 3, d);

    AscentConfig cfg;
    cfg.norms = RatioNorms::L2OverL2;

    std::vector<double> member_est;
    for (const Network& m : members)
      member_est.push_back(empirical_llc(NetworkModel(m), anchors, 0.1, cfg).value);

    EnsembleModel stack;
    stack.kind = EnsembleModel::Kind::Stacked;
    stack.members = members;
    stack.meta = test::random_net(rng, {n * k, 4, k});
    stack.certified_lg = analytic_bound(stack.meta).value;
    stack.member_llc = {fake_report(1), fake_report(1)};
    stack.certificate = stacked_lc(member_est, stack.certified_lg);
    stack.validate();

    const double ens = empirical_llc_ensemble(stack, anchors, 0.1, cfg).value;
    double rss = 0.0;
    for (double l : member_est) rss += l * l;
    CHECK(ens <= stack.certified_lg * std::sqrt(rss) * 1.01);
  }
}

TEST_CASE("manifest round trip preserves the model") {
  Rng rng(51);
  std::vector<Network> members = {test::random_net(rng, {3, 5, 2}),
                                  test::random_net(rng, {3, 4, 2})};
  Tensor anchors = random_anchors(rng, 2, 3);
  EnsembleModel m = build_bagged(members, anchors, 0.1, WeightMode::Proposed);

  test::TempDir dir("manifest");
  const std::string path = dir.file("bag.json");
  save_ensemble(m, path);
  EnsembleModel back = load_ensemble(path);

  CHECK(back.kind == m.kind);
  CHECK(back.mode == m.mode);
  CHECK(back.certificate == m.certificate);
  Tensor x = test::random_vector(rng, 3);
  CHECK(back.forward(x).vec() == m.forward(x).vec());

  // stacked manifests round trip too
  StackedFixture f = make_stacked_fixture(3);
  EnsembleModel stacked = build_stacked(f.members, f.anchors, 0.1, WeightMode::Proposed,
                                        f.heldout, f.options);
  const std::string spath = dir.file("stack.json");
  save_ensemble(stacked, spath);
  EnsembleModel sback = load_ensemble(spath);
  Tensor y = test::random_vector(rng, 2);
  CHECK(sback.forward(y).vec() == stacked.forward(y).vec());
  CHECK(sback.certified_lg == stacked.certified_lg);

  // corrupting the stored certificate must fail the integrity check
  {
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string key = "\"certificate\":";
    const auto pos = text.find(key);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, key.size(), "\"certificate\": 999e9, \"x\":");
    std::ofstream out(dir.file("tampered.json"));
    out << text;
    out.close();
    // member paths resolve relative to the manifest, which still lives in dir
    CHECK_THROWS_AS(load_ensemble(dir.file("tampered.json")), ParseError);
  }
}

TEST_SUITE_END();
