// Copyright 2026 The dere Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DERE_HARNESS_HPP_
#define DERE_HARNESS_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dere/experiment.hpp"
#include "dere/landmark_data.hpp"
#include "dere/losses.hpp"
#include "dere/model.hpp"
#include "dere/optim.hpp"
#include "dere/st_graph.hpp"

namespace dere {

/// One leave-one-subject-out fold; indices refer to manifest samples.
struct Fold {
  std::string subject;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// One fold per distinct subject, in order of first appearance.
std::vector<Fold> loso_split(const DatasetManifest& manifest);

/// Magnifies, optionally augments, and builds graphs for the given samples.
/// With `augment`, each sample is followed by `config.augment.copies`
/// jittered copies seeded from `seed`.
std::vector<StGraph> prepare_graphs(const DatasetManifest& manifest,
                                    std::span<const std::size_t> indices,
                                    const ExperimentConfig& config, bool augment,
                                    std::uint64_t seed);

/// Number of (train, test) pairs whose node features are bit-identical.
std::size_t count_leaks(std::span<const StGraph> train, std::span<const StGraph> test);

struct StepLog {
  int epoch = 0;
  int step = 0;
  double me = 0, mc = 0, wc = 0, b = 0, total = 0;
};

struct EpochLoss {
  double me = 0, mc = 0, wc = 0, b = 0, total = 0;
};

struct TrainResult {
  DereModel model;
  WeightCenterTable centers;
  std::vector<StepLog> steps;
  std::vector<EpochLoss> epochs;
};

/// Derives an independent seed for stream `index` of `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Mini-batch SGD on the total loss. Deterministic in `seed` (which fixes
/// both initialization and batch order).
TrainResult train_fold(std::span<const StGraph> train, const ExperimentConfig& config,
                       std::uint64_t seed);

/// Runs one training step on `batch` and returns the loss terms.
StepLog train_step(DereModel& model, WeightCenterTable& centers, ad::Optimizer& optimizer,
                   std::span<const StGraph> batch, const ExperimentConfig& config);

struct Prediction {
  std::size_t sample = 0;
  int truth = 0;
  int predicted = 0;
  std::vector<double> logits;
};

struct FoldReport {
  std::string subject;
  std::vector<Prediction> predictions;
  double accuracy = 0.0;
};

/// Argmax prediction for each graph; no augmentation and no state change.
FoldReport evaluate(const DereModel& model, std::span<const StGraph> test,
                    std::span<const std::size_t> sample_ids = {}, const std::string& subject = "");

struct Metrics {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  std::vector<double> per_class_f1;
  /// Classes whose F1 denominator was zero (reported as 0).
  std::vector<int> undefined_f1;
  Matrix confusion;  // truth x predicted
};

Metrics compute_metrics(std::span<const Prediction> predictions, int num_classes);
Metrics compute_metrics(std::span<const FoldReport> folds, int num_classes);

struct RunReport {
  ExperimentConfig config;
  std::vector<Fold> folds;
  std::vector<FoldReport> fold_reports;
  std::vector<std::vector<EpochLoss>> curves;  // per fold
  Metrics metrics;
  double wall_seconds = 0.0;

  /// Headline F1 according to config.micro_f1.
  double f1() const { return config.micro_f1 ? metrics.micro_f1 : metrics.macro_f1; }
  /// Everything except wall time.
  nlohmann::json to_json(bool include_wall_time = true) const;
};

/// Called once per trained fold, possibly from a worker thread.
using FoldCallback = std::function<void(std::size_t, const Fold&, const TrainResult&)>;

/// Full LOSO cross-validation. Folds run on `config.threads` threads; the
/// result does not depend on the thread count.
RunReport run_loso(const DatasetManifest& manifest, const ExperimentConfig& config,
                   const FoldCallback& on_fold = {});

struct AblationRow {
  std::string name;
  RunReport report;
};

struct AblationTable {
  std::vector<AblationRow> module_rows;  // backbone, +ADM, +ADM+RRM
  std::vector<AblationRow> loss_rows;    // all losses, lambda_1 = 0, lambda_2 = 0, lambda_3 = 0

  std::string format() const;
  nlohmann::json to_json() const;
};

AblationTable run_ablation(const DatasetManifest& manifest, const ExperimentConfig& config);

}  // namespace dere

#endif  // DERE_HARNESS_HPP_
