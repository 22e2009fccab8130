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

#include "dere/experiment.hpp"

#include <fstream>

#include "dere/error.hpp"

namespace dere {

using nlohmann::json;

void ExperimentConfig::validate() const {
  model.validate();
  losses.validate();
  if (train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (train.batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (train.optimizer != "sgd" && train.optimizer != "adam")
    throw ConfigError("train.optimizer must be \"sgd\" or \"adam\"");
  if (!(train.learning_rate >= 0)) throw ConfigError("train.learning_rate must be >= 0");
  if (augment.copies < 0) throw ConfigError("augment.copies must be >= 0");
  if (!(magnification > 0)) throw ConfigError("magnification must be positive");
  if (!(center_rate > 0 && center_rate <= 1)) throw ConfigError("center_rate must be in (0, 1]");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{
      {"data",
       {{"path", c.data.path},
        {"classes", c.data.classes},
        {"subjects", c.data.subjects},
        {"per_subject", c.data.per_subject},
        {"noise", c.data.noise},
        {"seed", c.data.seed}}},
      {"model", c.model},
      {"losses", c.losses},
      {"train",
       {{"optimizer", c.train.optimizer},
        {"learning_rate", c.train.learning_rate},
        {"momentum", c.train.momentum},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"plateau_patience", c.train.plateau_patience},
        {"plateau_tolerance", c.train.plateau_tolerance}}},
      {"augment",
       {{"copies", c.augment.copies},
        {"min_scale", c.augment.jitter.min_scale},
        {"max_scale", c.augment.jitter.max_scale},
        {"max_shift", c.augment.jitter.max_shift}}},
      {"magnification", c.magnification},
      {"normalize_coordinates", c.normalize_coordinates},
      {"center_rate", c.center_rate},
      {"center_mode", c.center_mode == WeightCenterTable::Mode::ema ? "ema" : "batch"},
      {"micro_f1", c.micro_f1},
      {"seed", c.seed},
      {"threads", c.threads}};
}

void from_json(const json& j, ExperimentConfig& c) {
  if (j.contains("data")) {
    const auto& d = j["data"];
    c.data.path = d.value("path", c.data.path);
    c.data.classes = d.value("classes", c.data.classes);
    c.data.subjects = d.value("subjects", c.data.subjects);
    c.data.per_subject = d.value("per_subject", c.data.per_subject);
    c.data.noise = d.value("noise", c.data.noise);
    c.data.seed = d.value("seed", c.data.seed);
  }
  if (j.contains("model")) from_json(j["model"], c.model);
  if (j.contains("losses")) from_json(j["losses"], c.losses);
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train.optimizer = t.value("optimizer", c.train.optimizer);
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    c.train.momentum = t.value("momentum", c.train.momentum);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.plateau_patience = t.value("plateau_patience", c.train.plateau_patience);
    c.train.plateau_tolerance = t.value("plateau_tolerance", c.train.plateau_tolerance);
  }
  if (j.contains("augment")) {
    const auto& a = j["augment"];
    c.augment.copies = a.value("copies", c.augment.copies);
    c.augment.jitter.min_scale = a.value("min_scale", c.augment.jitter.min_scale);
    c.augment.jitter.max_scale = a.value("max_scale", c.augment.jitter.max_scale);
    c.augment.jitter.max_shift = a.value("max_shift", c.augment.jitter.max_shift);
  }
  c.magnification = j.value("magnification", c.magnification);
  c.normalize_coordinates = j.value("normalize_coordinates", c.normalize_coordinates);
  c.center_rate = j.value("center_rate", c.center_rate);
  if (j.contains("center_mode")) {
    const auto m = j["center_mode"].get<std::string>();
    if (m == "ema")
      c.center_mode = WeightCenterTable::Mode::ema;
    else if (m == "batch")
      c.center_mode = WeightCenterTable::Mode::batch;
    else
      throw ConfigError("center_mode must be \"ema\" or \"batch\"");
  }
  c.micro_f1 = j.value("micro_f1", c.micro_f1);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  ExperimentConfig c;
  try {
    from_json(json::parse(in), c);
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig synthetic_benchmark_config() {
  ExperimentConfig c;
  c.train.optimizer = "adam";
  c.train.learning_rate = 0.005;
  c.train.epochs = 100;
  c.train.batch_size = 16;
  c.augment.copies = 0;
  c.losses.mean_center = 0.0;
  return c;
}

DatasetManifest load_or_synthesize(const DataConfig& data) {
  if (!data.path.empty()) return load_manifest(data.path);
  return synthesize_dataset(ClassMotionSpec::builtin(data.classes), data.subjects,
                            data.per_subject, data.noise, data.seed);
}

}  // namespace dere
