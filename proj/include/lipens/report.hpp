#pragma once

#include "lipens/attacks.hpp"
#include "lipens/data.hpp"
#include "lipens/ensemble.hpp"
#include "lipens/lipschitz.hpp"
#include "lipens/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lipens {

/// One table row: a model with its local-Lipschitz estimate and accuracies.
struct ExperimentRow {
  std::string name;
  double llc_estimate = 0.0;
  double clean_acc = 0.0;
  double fgsm_acc = 0.0;
  double pgd_acc = 0.0;
  double certificate = 0.0;  // ensembles only; 0 for base learners
};

/// Full configuration of an experiment run; every field is echoed into the
/// report so unstated-hyperparameter ambiguity never leaks into results.
struct ExperimentOptions {
  std::string experiment = "table1-fnn-desk";
  std::string data_dir;  // directory with the four MNIST IDX files
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  Index train_subset = 10000;
  double heldout_fraction = 0.2;  // meta-learner split, members never see it
  int epochs = 10;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  Index hidden_width = 256;

  Index anchor_count = 200;
  Index eval_count = 1000;
  double llc_radius = 0.1;
  AscentConfig ascent{};

  double fgsm_eps = 0.1;
  double pgd_eps = 0.01;
  int pgd_steps = 40;
  bool clamp_inputs = true;  // [0,1] box for image data; off for synthetic

  Index meta_hidden = 64;
  double stacked_safety = 0.95;
  double stacked_reverse_factor = 2.0;

  // smoke-blobs only
  Index blobs_n = 2000;
  double blobs_noise = 0.06;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<ExperimentRow> rows;
};

struct ExperimentReport {
  ExperimentOptions options;
  std::vector<std::string> scale_deviations;
  std::vector<SeedRun> runs;
  std::vector<ExperimentRow> median_rows;  // per-metric median across seeds

  std::string to_json() const;
  std::string to_markdown() const;
};

/// The fixed row set of the table experiments.
const std::vector<std::string>& experiment_row_names();

/// Runs the named experiment ("table1-fnn-desk" on MNIST from data_dir, or
/// "smoke-blobs" on synthetic data). The report is filled incrementally so a
/// caller catching a failure still holds the completed seeds.
void run_experiment(const ExperimentOptions& options, ExperimentReport& out);
ExperimentReport run_experiment(const ExperimentOptions& options);

}  // namespace lipens
