// lipens command-line driver: training, Lipschitz analysis, ensemble
// construction, white-box attacks and the table experiments.

#include "lipens/attacks.hpp"
#include "lipens/data.hpp"
#include "lipens/ensemble.hpp"
#include "lipens/errors.hpp"
#include "lipens/lipschitz.hpp"
#include "lipens/network.hpp"
#include "lipens/report.hpp"
#include "lipens/rng.hpp"
#include "lipens/train.hpp"

#include "sha256.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>
#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace lipens;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::vector<Index> shuffled_prefix(Index total, Index take, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(idx);
  if (take > 0 && take < total) idx.resize(static_cast<std::size_t>(take));
  return idx;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw ParseError("write failed for '" + path + "'");
}

/// A model argument is either a raw weight file or an ensemble manifest
/// (JSON), sniffed by the first byte.
struct LoadedModel {
  std::unique_ptr<Network> net;
  std::unique_ptr<EnsembleModel> ens;
  std::unique_ptr<NetworkModel> view;

  const Model& model() const { return ens ? static_cast<const Model&>(*ens) : *view; }
};

LoadedModel load_model_arg(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw ParseError("cannot open model '" + path + "'");
  char c = 0;
  probe >> std::ws;
  probe.get(c);
  probe.close();

  LoadedModel out;
  if (c == '{') {
    out.ens = std::make_unique<EnsembleModel>(load_ensemble(path));
  } else {
    out.net = std::make_unique<Network>(load_network(path));
    out.view = std::make_unique<NetworkModel>(*out.net);
  }
  return out;
}

// ---------------------------------------------------------------------------
// train-base

struct TrainBaseArgs {
  std::string arch = "fnn2";
  std::string data_dir;
  std::string out_path;
  int epochs = 10;
  std::uint64_t seed = 1;
  Index subset = 0;  // 0 = all
  Index width = 256;
  Index batch = 128;
  double lr = 1e-3;
};

int run_train_base(const TrainBaseArgs& a) {
  MnistData data = load_mnist_dir(a.data_dir);
  LabeledDataset train_set = data.train;
  if (a.subset > 0 && a.subset < train_set.size()) {
    train_set = train_set.select(
        shuffled_prefix(train_set.size(), a.subset, Rng::derive(a.seed, 0x73756273ull)));
  }

  TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch;
  cfg.epochs = a.epochs;
  cfg.rng_seed = Rng::derive(a.seed, 0x7472616eull);

  Network net = make_fnn(a.arch, train_set.dim(), train_set.class_count, a.width,
                         Rng::derive(a.seed, 0x696e6974ull));
  TrainResult result = train(std::move(net), train_set, cfg);
  save_network(result.net, a.out_path);

  nlohmann::ordered_json log;
  log["arch"] = a.arch;
  log["width"] = a.width;
  log["epochs"] = a.epochs;
  log["batch_size"] = a.batch;
  log["learning_rate"] = a.lr;
  log["seed"] = a.seed;
  log["subset"] = train_set.size();
  log["final_loss"] = result.loss_history.empty() ? 0.0 : result.loss_history.back();
  log["train_accuracy"] = evaluate(result.net, train_set);
  log["test_accuracy"] = evaluate(result.net, data.test);
  log["loss_history"] = result.loss_history;
  write_text(a.out_path + ".trainlog.json", log.dump(2) + "\n");

  std::cout << "trained " << a.arch << " -> " << a.out_path << " (test accuracy "
            << log["test_accuracy"].dump() << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// llc

struct LlcArgs {
  std::string model_path;
  std::string data_dir;
  double eps = 0.1;
  Index anchors = 200;
  std::uint64_t anchor_seed = 1;
  AscentConfig ascent{};
  std::string norms = "l1linf";
  bool witnesses = false;
  std::string out_path;
};

int run_llc(const LlcArgs& a) {
  LoadedModel m = load_model_arg(a.model_path);
  MnistData data = load_mnist_dir(a.data_dir);
  const LabeledDataset anchor_set = data.test.select(
      shuffled_prefix(data.test.size(), std::min(a.anchors, data.test.size()), a.anchor_seed));

  AscentConfig cfg = a.ascent;
  if (a.norms == "l2l2") cfg.norms = RatioNorms::L2OverL2;
  else if (a.norms == "l1linf") cfg.norms = RatioNorms::L1OverLinf;
  else throw std::invalid_argument("llc: --norms must be l1linf or l2l2");

  LipschitzReport report = empirical_llc(m.model(), anchor_set.inputs, a.eps, cfg);
  const std::string line = report.to_json_line(a.witnesses) + "\n";
  if (!a.out_path.empty()) write_text(a.out_path, line);
  std::cout << line;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// build-ensemble

struct BuildArgs {
  std::string kind = "bag";
  std::string mode = "proposed";
  std::vector<std::string> member_paths;
  std::string data_dir;
  std::string out_path;
  double eps = 0.1;
  Index anchors = 200;
  std::uint64_t seed = 1;
  Index meta_hidden = 64;
  int meta_epochs = 10;
  double heldout_frac = 0.2;
};

int run_build(const BuildArgs& a) {
  std::vector<Network> members;
  for (const std::string& p : a.member_paths) members.push_back(load_network(p));
  MnistData data = load_mnist_dir(a.data_dir);
  const LabeledDataset anchor_set = data.test.select(shuffled_prefix(
      data.test.size(), std::min(a.anchors, data.test.size()), Rng::derive(a.seed, 0x616e6368ull)));

  AscentConfig ascent;
  ascent.seed = Rng::derive(a.seed, 0x61736365ull);

  EnsembleModel model;
  if (a.kind == "bag") {
    model = build_bagged(std::move(members), anchor_set.inputs, a.eps,
                         weight_mode_from_name(a.mode), ascent);
  } else if (a.kind == "stack") {
    SplitResult parts = split(data.train, 1.0 - a.heldout_frac, a.heldout_frac, 0.0,
                              Rng::derive(a.seed, 0x706c6974ull));
    StackedOptions so;
    so.meta_hidden = a.meta_hidden;
    so.meta_train.epochs = a.meta_epochs;
    so.meta_train.rng_seed = Rng::derive(a.seed, 0x6d657461ull);
    model = build_stacked(std::move(members), anchor_set.inputs, a.eps,
                          weight_mode_from_name(a.mode), parts.heldout, so, ascent);
  } else {
    throw std::invalid_argument("build-ensemble: kind must be bag or stack");
  }

  save_ensemble(model, a.out_path);
  nlohmann::ordered_json j;
  j["manifest"] = a.out_path;
  j["kind"] = a.kind;
  j["mode"] = a.mode;
  j["certificate"] = model.certificate;
  j["member_llc"] = model.member_llc_values();
  if (model.kind == EnsembleModel::Kind::Stacked) j["certified_lg"] = model.certified_lg;
  std::cout << j.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// attack

struct AttackArgs {
  std::string model_path;
  std::string data_dir;
  std::string kind = "fgsm";
  double eps = 0.1;
  int steps = 40;
  double eta = 0.0;
  Index limit = 0;
  std::uint64_t eval_seed = 1;
  bool no_clamp = false;
  std::string jsonl_path;
};

int run_attack(const AttackArgs& a) {
  LoadedModel m = load_model_arg(a.model_path);
  MnistData data = load_mnist_dir(a.data_dir);
  LabeledDataset eval_set = data.test;
  if (a.limit > 0 && a.limit < eval_set.size()) {
    eval_set = eval_set.select(shuffled_prefix(eval_set.size(), a.limit, a.eval_seed));
  }

  if (a.kind != "pgd" && a.kind != "fgsm")
    throw std::invalid_argument("attack: kind must be fgsm or pgd");
  AttackConfig cfg = (a.kind == "pgd") ? AttackConfig::pgd(a.eps, a.steps, a.eta)
                                       : AttackConfig::fgsm(a.eps);
  if (!a.no_clamp) cfg.clamp = {0.0, 1.0};

  std::optional<std::ofstream> jsonl;
  if (!a.jsonl_path.empty()) {
    jsonl.emplace(a.jsonl_path);
    if (!*jsonl) throw ParseError("cannot open '" + a.jsonl_path + "'");
  }

  const double clean = evaluate(m.model(), eval_set);
  const double adv = adversarial_accuracy(m.model(), eval_set, cfg, jsonl ? &*jsonl : nullptr);

  nlohmann::ordered_json j;
  j["kind"] = a.kind;
  j["eps"] = a.eps;
  if (a.kind == "pgd") {
    j["steps"] = a.steps;
    j["eta"] = (a.eta > 0.0) ? a.eta : a.eps / 10.0;
  }
  j["clamp"] = !a.no_clamp;
  j["n"] = eval_set.size();
  j["clean_accuracy"] = clean;
  j["adversarial_accuracy"] = adv;
  std::cout << j.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string experiment = "table1-fnn-desk";
  std::string data_dir;
  std::string config_path;
  std::string out_json;
  std::string out_md;
  std::string seeds_csv;
  // scale overrides; negative means "not set on the command line"
  Index subset = -1;
  int epochs = -1;
  Index width = -1;
  Index anchors = -1;
  Index eval_count = -1;
  int pgd_steps = -1;
  double llc_eps = -1;
  double fgsm_eps = -1;
  double pgd_eps = -1;
};

ExperimentOptions experiment_defaults(const std::string& experiment) {
  ExperimentOptions o;
  o.experiment = experiment;
  if (experiment == "smoke-blobs") {
    o.blobs_n = 2000;
    o.train_subset = 2000;
    o.epochs = 10;
    o.hidden_width = 16;
    o.anchor_count = 50;
    o.eval_count = 300;
    o.pgd_steps = 10;
    o.clamp_inputs = false;
    o.meta_hidden = 16;
  }
  return o;
}

void apply_config_file(ExperimentOptions& o, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed config: ") + e.what());
  }
  if (j.contains("seeds")) o.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("data_dir")) o.data_dir = j["data_dir"].get<std::string>();
  if (j.contains("train_subset")) o.train_subset = j["train_subset"].get<Index>();
  if (j.contains("epochs")) o.epochs = j["epochs"].get<int>();
  if (j.contains("hidden_width")) o.hidden_width = j["hidden_width"].get<Index>();
  if (j.contains("anchor_count")) o.anchor_count = j["anchor_count"].get<Index>();
  if (j.contains("eval_count")) o.eval_count = j["eval_count"].get<Index>();
  if (j.contains("pgd_steps")) o.pgd_steps = j["pgd_steps"].get<int>();
  if (j.contains("llc_radius")) o.llc_radius = j["llc_radius"].get<double>();
  if (j.contains("fgsm_eps")) o.fgsm_eps = j["fgsm_eps"].get<double>();
  if (j.contains("pgd_eps")) o.pgd_eps = j["pgd_eps"].get<double>();
  if (j.contains("blobs_n")) o.blobs_n = j["blobs_n"].get<Index>();
}

int run_report(const ReportArgs& a) {
  ExperimentOptions o = experiment_defaults(a.experiment);
  if (!a.config_path.empty()) apply_config_file(o, a.config_path);
  // explicit flags win over the config file
  if (!a.data_dir.empty()) o.data_dir = a.data_dir;
  if (!a.seeds_csv.empty()) {
    o.seeds.clear();
    std::stringstream ss(a.seeds_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) o.seeds.push_back(std::stoull(tok));
  }
  if (a.subset >= 0) o.train_subset = a.subset;
  if (a.epochs >= 0) o.epochs = a.epochs;
  if (a.width >= 0) o.hidden_width = a.width;
  if (a.anchors >= 0) o.anchor_count = a.anchors;
  if (a.eval_count >= 0) o.eval_count = a.eval_count;
  if (a.pgd_steps >= 0) o.pgd_steps = a.pgd_steps;
  if (a.llc_eps >= 0) o.llc_radius = a.llc_eps;
  if (a.fgsm_eps >= 0) o.fgsm_eps = a.fgsm_eps;
  if (a.pgd_eps >= 0) o.pgd_eps = a.pgd_eps;

  ExperimentReport report;
  try {
    run_experiment(o, report);
  } catch (...) {
    // surface whatever completed so a failed stage is still inspectable
    if (!report.runs.empty() && !a.out_json.empty()) {
      write_text(a.out_json + ".partial", report.to_json());
      std::cerr << "partial results written to " << a.out_json << ".partial\n";
    }
    throw;
  }

  const std::string json_text = report.to_json();
  if (!a.out_json.empty()) write_text(a.out_json, json_text);
  if (!a.out_md.empty()) write_text(a.out_md, report.to_markdown());
  if (a.out_json.empty() && a.out_md.empty()) std::cout << json_text;
  else std::cout << report.to_markdown();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// make-data

struct MakeDataArgs {
  std::string kind = "blobs";
  std::string dir;
  Index n = 2000;
  Index test_n = 1000;
  double noise = 0.06;
  std::uint64_t seed = 1;
};

int run_make_data(const MakeDataArgs& a) {
  fs::create_directories(a.dir);
  auto make = [&](Index n, std::uint64_t seed) {
    if (a.kind == "blobs") return make_blobs(n, a.noise, seed);
    if (a.kind == "moons") return make_two_moons(n, a.noise, seed);
    throw std::invalid_argument("make-data: kind must be blobs or moons");
  };
  LabeledDataset train_set = make(a.n, a.seed);
  LabeledDataset test_set = make(a.test_n, a.seed + 1);

  const fs::path dir(a.dir);
  save_idx(train_set, (dir / "train-images-idx3-ubyte").string(),
           (dir / "train-labels-idx1-ubyte").string(), 1, 2);
  save_idx(test_set, (dir / "t10k-images-idx3-ubyte").string(),
           (dir / "t10k-labels-idx1-ubyte").string(), 1, 2);

  nlohmann::ordered_json manifest;
  manifest["kind"] = a.kind;
  manifest["n_train"] = a.n;
  manifest["n_test"] = a.test_n;
  manifest["noise"] = a.noise;
  manifest["seed"] = a.seed;
  manifest["quantization"] = "round(v*255)/255";
  manifest["files"] = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                       "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
  write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << "wrote " << a.kind << " dataset to " << a.dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fetch-mnist

struct FetchArgs {
  std::string dir;
  std::string base_url = "http://yann.lecun.com/exdb/mnist";
  std::vector<std::string> expected;  // name=hex pairs
};

std::string gunzip(const std::string& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw ParseError("gunzip: zlib init failed");
  std::string out;
  out.resize(std::max<std::size_t>(in.size() * 4, std::size_t(1) << 20));
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  std::size_t written = 0;
  int rc = Z_OK;
  do {
    if (written == out.size()) out.resize(out.size() * 2);
    zs.next_out = reinterpret_cast<Bytef*>(out.data() + written);
    zs.avail_out = static_cast<uInt>(out.size() - written);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw ParseError("gunzip: corrupt stream");
    }
    written = out.size() - zs.avail_out;
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  out.resize(written);
  return out;
}

int run_fetch(const FetchArgs& a) {
  fs::create_directories(a.dir);
  const std::vector<std::string> names = {
      "train-images-idx3-ubyte", "train-labels-idx1-ubyte",
      "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};

  std::vector<std::pair<std::string, std::string>> expected;
  for (const std::string& e : a.expected) {
    const auto pos = e.find('=');
    if (pos == std::string::npos)
      throw std::invalid_argument("--sha256 expects name=hex, got '" + e + "'");
    expected.emplace_back(e.substr(0, pos), e.substr(pos + 1));
  }

  // split the base url into host and path prefix
  std::string url = a.base_url;
  const auto scheme = url.find("://");
  if (scheme != std::string::npos) url = url.substr(scheme + 3);
  const auto slash = url.find('/');
  const std::string host = (slash == std::string::npos) ? url : url.substr(0, slash);
  std::string prefix = (slash == std::string::npos) ? "" : url.substr(slash);
  if (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  bool all_ok = true;
  for (const std::string& name : names) {
    const fs::path target = fs::path(a.dir) / name;
    if (!fs::exists(target)) {
      httplib::Client client(host);
      client.set_read_timeout(60, 0);
      client.set_follow_location(true);
      const std::string remote = prefix + "/" + name + ".gz";
      std::cout << "fetching http://" << host << remote << "\n";
      auto res = client.Get(remote);
      if (!res || res->status != 200) {
        std::cerr << "download failed for " << name
                  << " (no network or mirror unavailable); place the file at "
                  << target.string() << " manually\n";
        all_ok = false;
        continue;
      }
      write_text(target.string(), gunzip(res->body));
    }

    std::ifstream in(target, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string digest = tools::Sha256::of(bytes);
    std::cout << name << " sha256=" << digest << "\n";
    for (const auto& [ename, ehex] : expected) {
      if (ename == name && ehex != digest) {
        std::cerr << name << ": checksum mismatch (expected " << ehex << ")\n";
        all_ok = false;
      }
    }
  }
  if (!all_ok) throw ParseError("fetch-mnist: some files are missing or failed verification");

  // structural verification: headers must parse and counts must match
  MnistData data = load_mnist_dir(a.dir);
  std::cout << "ok: train n=" << data.train.size() << " d=" << data.train.dim()
            << ", test n=" << data.test.size() << " d=" << data.test.dim() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lipschitz-certified ensembles of feed-forward classifiers"};
  app.require_subcommand(1);

  TrainBaseArgs train_args;
  CLI::App* tb = app.add_subcommand("train-base", "Train a base classifier on a dataset dir");
  tb->add_option("--arch", train_args.arch, "fnn2|fnn4|fnn5")->required();
  tb->add_option("--data", train_args.data_dir, "dataset directory (IDX files)")->required();
  tb->add_option("--out", train_args.out_path, "output weight file")->required();
  tb->add_option("--epochs", train_args.epochs);
  tb->add_option("--seed", train_args.seed);
  tb->add_option("--subset", train_args.subset, "train on a shuffled subset of this size");
  tb->add_option("--width", train_args.width, "hidden width");
  tb->add_option("--batch", train_args.batch);
  tb->add_option("--lr", train_args.lr);

  LlcArgs llc_args;
  CLI::App* lc = app.add_subcommand("llc", "Empirical local Lipschitz estimate of a model");
  lc->add_option("--model", llc_args.model_path, "weight file or ensemble manifest")->required();
  lc->add_option("--data", llc_args.data_dir)->required();
  lc->add_option("--eps", llc_args.eps, "infinity-ball radius")->required();
  lc->add_option("--anchors", llc_args.anchors);
  lc->add_option("--anchor-seed", llc_args.anchor_seed);
  lc->add_option("--steps", llc_args.ascent.steps);
  lc->add_option("--restarts", llc_args.ascent.restarts);
  lc->add_option("--step-size", llc_args.ascent.step_size);
  lc->add_option("--ascent-seed", llc_args.ascent.seed);
  lc->add_option("--norms", llc_args.norms, "l1linf|l2l2");
  lc->add_flag("--witnesses", llc_args.witnesses, "include witness pairs in the JSON");
  lc->add_option("--out", llc_args.out_path);

  BuildArgs build_args;
  CLI::App* be = app.add_subcommand("build-ensemble", "Build a certified ensemble");
  be->add_option("--kind", build_args.kind, "bag|stack")->required();
  be->add_option("--mode", build_args.mode, "proposed|equal|reverse")->required();
  be->add_option("--members", build_args.member_paths, "member weight files")
      ->required()
      ->expected(-1);
  be->add_option("--data", build_args.data_dir)->required();
  be->add_option("--out", build_args.out_path, "manifest output path")->required();
  be->add_option("--eps", build_args.eps);
  be->add_option("--anchors", build_args.anchors);
  be->add_option("--seed", build_args.seed);
  be->add_option("--meta-hidden", build_args.meta_hidden);
  be->add_option("--meta-epochs", build_args.meta_epochs);
  be->add_option("--heldout-frac", build_args.heldout_frac);

  AttackArgs attack_args;
  CLI::App* at = app.add_subcommand("attack", "Attack a model and report accuracy");
  at->add_option("--model", attack_args.model_path)->required();
  at->add_option("--data", attack_args.data_dir)->required();
  at->add_option("--kind", attack_args.kind, "fgsm|pgd")->required();
  at->add_option("--eps", attack_args.eps)->required();
  at->add_option("--steps", attack_args.steps);
  at->add_option("--eta", attack_args.eta);
  at->add_option("--limit", attack_args.limit, "evaluate on this many shuffled samples");
  at->add_option("--eval-seed", attack_args.eval_seed);
  at->add_flag("--no-clamp", attack_args.no_clamp, "disable the [0,1] input box");
  at->add_option("--jsonl", attack_args.jsonl_path, "stream per-sample results here");

  ReportArgs report_args;
  CLI::App* rp = app.add_subcommand("report", "Run a full table experiment");
  rp->add_option("--experiment", report_args.experiment, "table1-fnn-desk|smoke-blobs");
  rp->add_option("--data", report_args.data_dir);
  rp->add_option("--config", report_args.config_path, "JSON config (flags override it)");
  rp->add_option("--out-json", report_args.out_json);
  rp->add_option("--out-md", report_args.out_md);
  rp->add_option("--seeds", report_args.seeds_csv, "comma-separated seed list");
  rp->add_option("--subset", report_args.subset);
  rp->add_option("--epochs", report_args.epochs);
  rp->add_option("--width", report_args.width);
  rp->add_option("--anchors", report_args.anchors);
  rp->add_option("--eval", report_args.eval_count);
  rp->add_option("--pgd-steps", report_args.pgd_steps);
  rp->add_option("--llc-eps", report_args.llc_eps);
  rp->add_option("--fgsm-eps", report_args.fgsm_eps);
  rp->add_option("--pgd-eps", report_args.pgd_eps);

  MakeDataArgs make_args;
  CLI::App* md = app.add_subcommand("make-data", "Write a synthetic IDX dataset");
  md->add_option("--kind", make_args.kind, "blobs|moons");
  md->add_option("--dir", make_args.dir)->required();
  md->add_option("--n", make_args.n);
  md->add_option("--test-n", make_args.test_n);
  md->add_option("--noise", make_args.noise);
  md->add_option("--seed", make_args.seed);

  FetchArgs fetch_args;
  CLI::App* fm = app.add_subcommand("fetch-mnist", "Download/verify the MNIST IDX files");
  fm->add_option("--dir", fetch_args.dir)->required();
  fm->add_option("--base-url", fetch_args.base_url);
  fm->add_option("--sha256", fetch_args.expected, "expected digests as name=hex")->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*tb) return run_train_base(train_args);
    if (*lc) return run_llc(llc_args);
    if (*be) return run_build(build_args);
    if (*at) return run_attack(attack_args);
    if (*rp) return run_report(report_args);
    if (*md) return run_make_data(make_args);
    if (*fm) return run_fetch(fetch_args);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
