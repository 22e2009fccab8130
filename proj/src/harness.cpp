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

#include "dere/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "dere/error.hpp"

namespace dere {

using nlohmann::json;

std::vector<Fold> loso_split(const DatasetManifest& manifest) {
  const auto subjects = manifest.subjects();
  if (subjects.size() < 2)
    throw ConfigError("loso_split: need at least 2 subjects, got " +
                      std::to_string(subjects.size()));
  std::vector<Fold> folds;
  for (const auto& subject : subjects) {
    Fold f;
    f.subject = subject;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i)
      (manifest.samples[i].subject == subject ? f.test : f.train).push_back(i);
    folds.push_back(std::move(f));
  }
  return folds;
}

std::vector<StGraph> prepare_graphs(const DatasetManifest& manifest,
                                    std::span<const std::size_t> indices,
                                    const ExperimentConfig& config, bool augment,
                                    std::uint64_t seed) {
  const NodeSelection selection = default_selection();
  const GraphOptions options{config.normalize_coordinates};
  std::vector<StGraph> out;
  const int copies = augment ? config.augment.copies : 0;
  out.reserve(indices.size() * static_cast<std::size_t>(1 + copies));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& raw = manifest.samples.at(indices[k]);
    const LandmarkSample magnified = magnify(raw, config.magnification);
    out.push_back(build_graph(magnified, selection, options));
    for (int c = 0; c < copies; ++c) {
      const auto jitter_seed = derive_seed(seed, indices[k] * 1000003ULL + static_cast<std::uint64_t>(c));
      out.push_back(build_graph(augment_crop_jitter(magnified, config.augment.jitter, jitter_seed),
                                selection, options));
    }
  }
  return out;
}

namespace {

std::uint64_t hash_graph(const StGraph& g) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& x : g.node_features) {
    const auto* p = reinterpret_cast<const unsigned char*>(x.data());
    for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(x.size()); ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

bool same_features(const StGraph& a, const StGraph& b) {
  for (int f = 0; f < kNumKeyframes; ++f)
    if (a.node_features[f] != b.node_features[f]) return false;
  return true;
}

}  // namespace

std::size_t count_leaks(std::span<const StGraph> train, std::span<const StGraph> test) {
  std::unordered_multimap<std::uint64_t, const StGraph*> index;
  for (const auto& g : train) index.emplace(hash_graph(g), &g);
  std::size_t leaks = 0;
  for (const auto& g : test) {
    const auto [lo, hi] = index.equal_range(hash_graph(g));
    for (auto it = lo; it != hi; ++it)
      if (same_features(*it->second, g)) ++leaks;
  }
  return leaks;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 over the combined input
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

StepLog train_step(DereModel& model, WeightCenterTable& centers, ad::Optimizer& optimizer,
                   std::span<const StGraph> batch, const ExperimentConfig& config) {
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto& g : batch) labels.push_back(g.label);

  const Variant variant = model.config().variant;
  const Index actions = model.config().total_actions();
  const ForwardResult fr = model.forward(batch);
  LossTerms terms;
  terms.me = loss_me(fr.logits, labels);
  if (variant != Variant::backbone_only) terms.mc = loss_mc(fr.adm.action_features, actions);
  if (variant == Variant::full) {
    terms.wc = loss_wc(fr.rrm.weights, labels, centers);
    terms.b = loss_b(fr.rrm.weights, actions);
  }
  const Tensor total = loss_total(terms, config.losses);
  ad::backward(total);
  optimizer.step(model.params());
  if (variant == Variant::full) {
    const Matrix w = Eigen::Map<const Matrix>(fr.rrm.weights.value().data(),
                                              static_cast<Index>(batch.size()), actions);
    centers.update(w, labels);
  }

  StepLog log;
  log.me = terms.me.item();
  log.mc = terms.mc.defined() ? terms.mc.item() : 0.0;
  log.wc = terms.wc.defined() ? terms.wc.item() : 0.0;
  log.b = terms.b.defined() ? terms.b.item() : 0.0;
  log.total = total.item();
  return log;
}

TrainResult train_fold(std::span<const StGraph> train, const ExperimentConfig& config,
                       std::uint64_t seed) {
  config.validate();
  if (train.size() < 2) throw ConfigError("train_fold: need at least 2 training samples");
  TrainResult result{DereModel(config.model, derive_seed(seed, 0)),
                     WeightCenterTable(config.model.num_classes, config.model.total_actions(),
                                       config.center_rate, config.center_mode),
                     {},
                     {}};
  std::unique_ptr<ad::Optimizer> optimizer;
  if (config.train.optimizer == "adam")
    optimizer = std::make_unique<ad::Adam>(ad::AdamOptions{.learning_rate = config.train.learning_rate});
  else
    optimizer = std::make_unique<ad::Sgd>(ad::SgdOptions{config.train.learning_rate, config.train.momentum});
  std::mt19937_64 rng(derive_seed(seed, 1));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_size = static_cast<std::size_t>(config.train.batch_size);
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  int step = 0;
  std::vector<StGraph> batch;

  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss sum;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();) {
      std::size_t stop = std::min(order.size(), start + batch_size);
      // A trailing batch of one would make the mean center loss vacuous.
      if (order.size() - stop == 1) stop = order.size();
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(train[order[k]]);
      start = stop;

      StepLog log;
      try {
        log = train_step(result.model, result.centers, *optimizer, batch, config);
      } catch (const InvariantError& e) {
        throw InvariantError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + ": " + e.what());
      }
      log.epoch = epoch;
      log.step = step++;
      result.steps.push_back(log);
      sum.me += log.me;
      sum.mc += log.mc;
      sum.wc += log.wc;
      sum.b += log.b;
      sum.total += log.total;
      ++batches;
    }
    const double inv = 1.0 / batches;
    result.epochs.push_back({sum.me * inv, sum.mc * inv, sum.wc * inv, sum.b * inv, sum.total * inv});

    if (config.train.plateau_patience > 0) {
      const double current = result.epochs.back().total;
      if (std::isinf(best) || current < best - config.train.plateau_tolerance * std::abs(best)) {
        best = current;
        stale = 0;
      } else if (++stale >= config.train.plateau_patience) {
        break;
      }
    }
  }
  return result;
}

FoldReport evaluate(const DereModel& model, std::span<const StGraph> test,
                    std::span<const std::size_t> sample_ids, const std::string& subject) {
  if (test.empty()) throw ConfigError("evaluate: empty test set");
  if (!sample_ids.empty() && sample_ids.size() != test.size())
    throw ConfigError("evaluate: sample id count does not match test set");
  FoldReport report;
  report.subject = subject;
  const ForwardResult fr = model.forward(test);
  const Matrix& logits = fr.logits.value();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    Prediction p;
    p.sample = sample_ids.empty() ? i : sample_ids[i];
    p.truth = test[i].label;
    Index arg = 0;
    logits.row(static_cast<Index>(i)).maxCoeff(&arg);
    p.predicted = static_cast<int>(arg);
    p.logits.assign(logits.row(static_cast<Index>(i)).data(),
                    logits.row(static_cast<Index>(i)).data() + logits.cols());
    correct += p.predicted == p.truth;
    report.predictions.push_back(std::move(p));
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  return report;
}

Metrics compute_metrics(std::span<const Prediction> predictions, int num_classes) {
  if (predictions.empty()) throw ConfigError("metrics: no predictions");
  Metrics m;
  m.confusion = Matrix::Zero(num_classes, num_classes);
  for (const auto& p : predictions) {
    if (p.truth < 0 || p.truth >= num_classes || p.predicted < 0 || p.predicted >= num_classes)
      throw ValidationError("metrics: label outside [0, K)");
    m.confusion(p.truth, p.predicted) += 1.0;
    m.correct += p.truth == p.predicted;
  }
  m.total = predictions.size();
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
  double f1_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const double tp = m.confusion(c, c);
    const double fp = m.confusion.col(c).sum() - tp;
    const double fn = m.confusion.row(c).sum() - tp;
    const double denom = 2.0 * tp + fp + fn;
    double f1 = 0.0;
    if (denom == 0.0)
      m.undefined_f1.push_back(c);
    else
      f1 = 2.0 * tp / denom;
    m.per_class_f1.push_back(f1);
    f1_sum += f1;
  }
  m.macro_f1 = f1_sum / num_classes;
  // Single-label multi-class: pooled precision = pooled recall = accuracy.
  m.micro_f1 = m.accuracy;
  return m;
}

Metrics compute_metrics(std::span<const FoldReport> folds, int num_classes) {
  std::vector<Prediction> all;
  for (const auto& f : folds) all.insert(all.end(), f.predictions.begin(), f.predictions.end());
  return compute_metrics(all, num_classes);
}

namespace {

json metrics_json(const Metrics& m) {
  json confusion = json::array();
  for (Index r = 0; r < m.confusion.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.confusion.cols(); ++c) row.push_back(static_cast<int>(m.confusion(r, c)));
    confusion.push_back(row);
  }
  return {{"total", m.total},           {"correct", m.correct},
          {"accuracy", m.accuracy},     {"macro_f1", m.macro_f1},
          {"micro_f1", m.micro_f1},     {"per_class_f1", m.per_class_f1},
          {"undefined_f1_classes", m.undefined_f1}, {"confusion", confusion}};
}

}  // namespace

json RunReport::to_json(bool include_wall_time) const {
  json folds_json = json::array();
  for (std::size_t i = 0; i < fold_reports.size(); ++i) {
    const auto& f = fold_reports[i];
    json preds = json::array();
    for (const auto& p : f.predictions)
      preds.push_back({{"sample", p.sample}, {"truth", p.truth}, {"predicted", p.predicted},
                       {"logits", p.logits}});
    folds_json.push_back({{"subject", f.subject},
                          {"accuracy", f.accuracy},
                          {"train_size", i < folds.size() ? folds[i].train.size() : 0},
                          {"predictions", preds}});
  }
  json curves_json = json::array();
  for (const auto& c : curves) {
    json fold = json::array();
    for (const auto& e : c) fold.push_back({e.me, e.mc, e.wc, e.b, e.total});
    curves_json.push_back(fold);
  }
  json j{{"config", config},
         {"metrics", metrics_json(metrics)},
         {"f1", f1()},
         {"folds", folds_json},
         {"curves", curves_json}};
  if (include_wall_time) j["wall_seconds"] = wall_seconds;
  return j;
}

RunReport run_loso(const DatasetManifest& manifest, const ExperimentConfig& input,
                   const FoldCallback& on_fold) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig config = input;
  config.model.num_classes = manifest.num_classes();
  config.validate();

  RunReport report;
  report.config = config;
  report.folds = loso_split(manifest);
  const std::size_t n = report.folds.size();
  report.fold_reports.resize(n);
  report.curves.resize(n);

  std::vector<std::exception_ptr> errors(n);
  auto run_fold = [&](std::size_t i) {
    try {
      const Fold& fold = report.folds[i];
      const std::uint64_t seed = derive_seed(config.seed, i);
      const auto train = prepare_graphs(manifest, fold.train, config, true, seed);
      const auto test = prepare_graphs(manifest, fold.test, config, false, seed);
      if (count_leaks(train, test) != 0)
        throw InvariantError("fold " + fold.subject + ": test sample found in training set");
      TrainResult trained = train_fold(train, config, seed);
      report.fold_reports[i] = evaluate(trained.model, test, fold.test, fold.subject);
      if (on_fold) on_fold(i, fold, trained);
      report.curves[i] = std::move(trained.epochs);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_fold(i);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= n) return;
            i = next++;
          }
          run_fold(i);
        }
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  report.metrics = compute_metrics(report.fold_reports, config.model.num_classes);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

AblationTable run_ablation(const DatasetManifest& manifest, const ExperimentConfig& config) {
  AblationTable table;
  for (Variant v : {Variant::backbone_only, Variant::backbone_adm, Variant::full}) {
    ExperimentConfig c = config;
    c.model.variant = v;
    table.module_rows.push_back({to_string(v), run_loso(manifest, c)});
  }
  // Loss rows start from all three terms active; a zero weight in the config
  // takes its default value here.
  ExperimentConfig full = config;
  full.model.variant = Variant::full;
  const LossWeights defaults;
  bool replaced = false;
  for (double LossWeights::*m : {&LossWeights::mean_center, &LossWeights::weight_center,
                                 &LossWeights::balance})
    if (full.losses.*m == 0.0) {
      full.losses.*m = defaults.*m;
      replaced = true;
    }
  table.loss_rows.push_back(
      {"L_MC+L_WC+L_B", replaced ? run_loso(manifest, full) : table.module_rows.back().report});
  const std::pair<const char*, double LossWeights::*> drops[] = {
      {"L_WC+L_B (lambda1=0)", &LossWeights::mean_center},
      {"L_MC+L_B (lambda2=0)", &LossWeights::weight_center},
      {"L_MC+L_WC (lambda3=0)", &LossWeights::balance}};
  for (const auto& [name, member] : drops) {
    ExperimentConfig c = full;
    c.losses.*member = 0.0;
    table.loss_rows.push_back({name, run_loso(manifest, c)});
  }
  return table;
}

std::string AblationTable::format() const {
  std::ostringstream os;
  auto section = [&os](const char* title, const std::vector<AblationRow>& rows) {
    os << std::left << std::setw(28) << title << std::right << std::setw(8) << "Acc(%)"
       << std::setw(8) << "F1" << '\n';
    for (const auto& r : rows)
      os << std::left << std::setw(28) << r.name << std::right << std::fixed
         << std::setprecision(2) << std::setw(8) << 100.0 * r.report.metrics.accuracy
         << std::setprecision(3) << std::setw(8) << r.report.f1() << '\n';
  };
  section("Methods", module_rows);
  os << '\n';
  section("Losses", loss_rows);
  return os.str();
}

json AblationTable::to_json() const {
  auto rows = [](const std::vector<AblationRow>& v) {
    json out = json::array();
    for (const auto& r : v)
      out.push_back({{"name", r.name},
                     {"accuracy", r.report.metrics.accuracy},
                     {"f1", r.report.f1()},
                     {"folds", r.report.folds.size()}});
    return out;
  };
  return {{"module_ablation", rows(module_rows)}, {"loss_ablation", rows(loss_rows)}};
}

}  // namespace dere
