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

#ifndef DERE_EXPERIMENT_HPP_
#define DERE_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "dere/landmark_data.hpp"
#include "dere/losses.hpp"
#include "dere/model.hpp"

namespace dere {

/// Where samples come from: a JSON-lines file, or the synthetic generator
/// when `path` is empty.
struct DataConfig {
  std::string path;
  int classes = 5;
  int subjects = 10;
  int per_subject = 2;
  double noise = 1.5;
  std::uint64_t seed = 7;
};

struct TrainConfig {
  std::string optimizer = "sgd";  // "sgd" or "adam"
  double learning_rate = 0.01;
  double momentum = 0.9;
  int epochs = 300;
  int batch_size = 16;
  /// Stop after this many epochs without a relative improvement of the mean
  /// training loss larger than `plateau_tolerance`. 0 disables.
  int plateau_patience = 30;
  double plateau_tolerance = 1e-4;
};

struct AugmentConfig {
  int copies = 2;  // jittered copies per training sample
  JitterConfig jitter;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  LossWeights losses;
  TrainConfig train;
  AugmentConfig augment;
  double magnification = 3.0;
  bool normalize_coordinates = true;
  double center_rate = 0.5;
  WeightCenterTable::Mode center_mode = WeightCenterTable::Mode::ema;
  bool micro_f1 = false;  // headline F1 is macro unless set
  std::uint64_t seed = 1;
  int threads = 1;  // concurrent LOSO folds

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::filesystem::path& path);

/// Settings used for the synthetic LOSO benchmark: Adam, 100 epochs, no
/// jitter copies, and the mean center loss switched off.
ExperimentConfig synthetic_benchmark_config();

/// Loads `data.path`, or synthesizes from the data section when it is empty.
/// The model's class count is taken from the result.
DatasetManifest load_or_synthesize(const DataConfig& data);

}  // namespace dere

#endif  // DERE_EXPERIMENT_HPP_
