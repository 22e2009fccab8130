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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dere/diagnostics.hpp"
#include "dere/error.hpp"
#include "dere/experiment.hpp"
#include "dere/harness.hpp"
#include "dere/landmark_data.hpp"
#include "dere/model.hpp"
#include "dere/param_store.hpp"
#include "dere/report.hpp"
#include "dere/st_graph.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;
constexpr int kExitError = 3;

struct GlobalOptions {
  std::string config_path;
  std::string preset = "default";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::optional<int> threads;
  std::optional<int> epochs;
  std::string variant;
};

dere::ExperimentConfig build_config(const GlobalOptions& g) {
  dere::ExperimentConfig c =
      g.preset == "benchmark" ? dere::synthetic_benchmark_config() : dere::ExperimentConfig{};
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw dere::ConfigError("cannot open config " + g.config_path);
    try {
      dere::from_json(json::parse(in), c);
    } catch (const json::exception& e) {
      throw dere::ConfigError(g.config_path + ": " + e.what());
    }
  }
  if (g.seed) c.seed = *g.seed;
  if (!g.data.empty()) c.data.path = g.data;
  if (g.threads) c.threads = *g.threads;
  if (g.epochs) c.train.epochs = *g.epochs;
  if (!g.variant.empty()) c.model.variant = dere::variant_from_string(g.variant);
  c.validate();
  return c;
}

dere::DatasetManifest load_data(dere::ExperimentConfig& c) {
  auto manifest = dere::load_or_synthesize(c.data);
  c.model.num_classes = manifest.num_classes();
  for (const auto& w : dere::loso_coverage_warnings(manifest)) dere::warn(w);
  return manifest;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw dere::Error("cannot write " + p.string());
  out << text;
}

json checkpoint_meta(const dere::ExperimentConfig& c, const std::string& scope) {
  return {{"config", c}, {"scope", scope}};
}

std::string format_metrics(const dere::Metrics& m, bool micro) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << "Acc " << 100.0 * m.accuracy << "%  ("
     << m.correct << "/" << m.total << ")  " << std::setprecision(4) << (micro ? "micro" : "macro")
     << " F1 " << (micro ? m.micro_f1 : m.macro_f1);
  return os.str();
}

json metrics_json(const dere::Metrics& m) {
  json per_class = m.per_class_f1;
  return {{"accuracy", m.accuracy},         {"correct", m.correct},
          {"total", m.total},               {"macro_f1", m.macro_f1},
          {"micro_f1", m.micro_f1},         {"per_class_f1", per_class},
          {"undefined_f1_classes", m.undefined_f1}};
}

int cmd_train(const GlobalOptions& g) {
  auto c = build_config(g);
  const auto manifest = load_data(c);
  std::vector<std::size_t> all(manifest.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto train = dere::prepare_graphs(manifest, all, c, true, dere::derive_seed(c.seed, 101));
  const auto result = dere::train_fold(train, c, c.seed);
  const auto plain = dere::prepare_graphs(manifest, all, c, false, 0);
  const auto report = dere::evaluate(result.model, plain, all, "all");
  const auto metrics = dere::compute_metrics(report.predictions, c.model.num_classes);

  std::cout << "trained " << to_string(c.model.variant) << " on " << manifest.samples.size()
            << " samples (" << train.size() << " with augmentation), " << result.epochs.size()
            << " epochs\n";
  if (!result.epochs.empty())
    std::cout << "final epoch loss " << std::setprecision(6) << result.epochs.back().total << "\n";
  std::cout << "train " << format_metrics(metrics, c.micro_f1) << "\n";
  if (!g.out.empty()) {
    const fs::path dir = g.out;
    write_text(dir / "config.json", json(c).dump(2) + "\n");
    fs::create_directories(dir / "checkpoints");
    dere::ad::save_checkpoint(dir / "checkpoints" / "model.json", result.model.params(),
                          checkpoint_meta(c, "all"));
    std::ofstream curves(dir / "curves.csv");
    dere::write_step_log(curves, result.steps);
    json r{{"config", c},
           {"epochs", result.epochs.size()},
           {"train_metrics", metrics_json(metrics)},
           {"weight_centers", result.centers.to_json()}};
    write_text(dir / "report.json", r.dump(2) + "\n");
    write_text(dir / "report.txt", "train " + format_metrics(metrics, c.micro_f1) + "\n");
    std::cout << "wrote " << dir.string() << "\n";
  }
  return 0;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& checkpoint) {
  auto c = build_config(g);
  std::ifstream in(checkpoint);
  if (!in) throw dere::Error("cannot open checkpoint " + checkpoint);
  const json doc = json::parse(in);
  dere::ExperimentConfig stored = c;
  if (doc.contains("meta") && doc["meta"].contains("config"))
    stored = doc["meta"]["config"].get<dere::ExperimentConfig>();
  c.model = stored.model;
  c.magnification = stored.magnification;
  c.normalize_coordinates = stored.normalize_coordinates;
  if (g.config_path.empty() && g.data.empty()) c.data = stored.data;
  const auto manifest = dere::load_or_synthesize(c.data);
  if (manifest.num_classes() > c.model.num_classes)
    throw dere::ValidationError("dataset has more classes than the checkpoint's model");

  dere::DereModel model(c.model, 0);
  dere::ad::load_checkpoint(checkpoint, model.params());
  std::vector<std::size_t> all(manifest.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto graphs = dere::prepare_graphs(manifest, all, c, false, 0);
  const auto report = dere::evaluate(model, graphs, all, "all");
  const auto metrics = dere::compute_metrics(report.predictions, c.model.num_classes);
  std::cout << "evaluated " << checkpoint << " on " << graphs.size() << " samples\n"
            << format_metrics(metrics, c.micro_f1) << "\n";
  if (!g.out.empty()) {
    const fs::path dir = g.out;
    json preds = json::array();
    for (const auto& p : report.predictions)
      preds.push_back({{"sample", p.sample}, {"truth", p.truth}, {"predicted", p.predicted},
                       {"logits", p.logits}});
    write_text(dir / "report.json",
               json{{"checkpoint", checkpoint}, {"metrics", metrics_json(metrics)},
                    {"predictions", preds}}
                       .dump(2) +
                   "\n");
    write_text(dir / "report.txt", format_metrics(metrics, c.micro_f1) + "\n");
  }
  return 0;
}

int cmd_loso(const GlobalOptions& g) {
  auto c = build_config(g);
  const auto manifest = load_data(c);
  std::mutex io;
  dere::FoldCallback on_fold;
  if (!g.out.empty()) {
    const fs::path ckpt = fs::path(g.out) / "checkpoints";
    fs::create_directories(ckpt);
    on_fold = [&, ckpt](std::size_t, const dere::Fold& f, const dere::TrainResult& r) {
      dere::ad::save_checkpoint(ckpt / ("fold_" + f.subject + ".json"), r.model.params(),
                            checkpoint_meta(c, f.subject));
      std::lock_guard lock(io);
      std::cerr << "fold " << f.subject << " done (" << r.epochs.size() << " epochs)\n";
    };
  }
  const auto report = dere::run_loso(manifest, c, on_fold);
  std::cout << dere::format_report(report);
  if (!g.out.empty()) {
    dere::write_run_directory(g.out, report);
    std::cout << "wrote " << g.out << "\n";
  }
  return 0;
}

int cmd_ablate(const GlobalOptions& g) {
  auto c = build_config(g);
  const auto manifest = load_data(c);
  const auto table = dere::run_ablation(manifest, c);
  std::cout << table.format();
  if (!g.out.empty()) {
    const fs::path dir = g.out;
    write_text(dir / "config.json", json(c).dump(2) + "\n");
    write_text(dir / "ablation.txt", table.format());
    write_text(dir / "ablation.json", table.to_json().dump(2) + "\n");
    for (const auto* rows : {&table.module_rows, &table.loss_rows})
      for (std::size_t i = 0; i < rows->size(); ++i) {
        const auto& row = (*rows)[i];
        const std::string kind = rows == &table.module_rows ? "module_" : "loss_";
        dere::write_run_directory(dir / "runs" / (kind + std::to_string(i)), row.report);
      }
    std::cout << "wrote " << dir.string() << "\n";
  }
  return 0;
}

int cmd_gradcheck(int seeds) {
  const auto entries = dere::gradient_suite(seeds);
  bool ok = true;
  std::cout << std::left << std::setw(28) << "check" << std::right << std::setw(14) << "max rel err"
            << "  result\n";
  for (const auto& e : entries) {
    std::cout << std::left << std::setw(28) << e.name << std::right << std::setw(14)
              << std::scientific << std::setprecision(3) << e.max_relative_error << "  "
              << (e.passed ? "ok" : "FAIL") << "\n";
    ok = ok && e.passed;
  }
  std::cout << (ok ? "all gradient checks passed\n" : "gradient check failures\n");
  return ok ? 0 : kExitInvariant;
}

int cmd_synth(int classes, int subjects, int per_subject, double noise, std::uint64_t seed,
              const std::string& out) {
  const auto m = dere::synthesize_dataset(dere::ClassMotionSpec::builtin(classes), subjects,
                                          per_subject, noise, seed);
  if (out.empty() || out == "-") {
    for (const auto& s : m.samples) std::cout << dere::sample_to_json(s).dump() << "\n";
  } else {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    dere::save_manifest(out, m);
    std::cerr << "wrote " << m.samples.size() << " samples to " << out << "\n";
  }
  return 0;
}

json matrix_json(const dere::Matrix& m) {
  json rows = json::array();
  for (dere::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (dere::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

int cmd_graph_dump(const GlobalOptions& g, std::size_t sample) {
  auto c = build_config(g);
  const auto manifest = dere::load_or_synthesize(c.data);
  if (sample >= manifest.samples.size())
    throw dere::ValidationError("sample " + std::to_string(sample) + " out of range (dataset has " +
                                std::to_string(manifest.samples.size()) + ")");
  const auto sel = dere::default_selection();
  dere::LandmarkSample s = manifest.samples[sample];
  s = dere::magnify(s, c.magnification);
  const auto graph = dere::build_graph(s, sel, {c.normalize_coordinates});
  json components = json::object();
  for (auto comp : dere::kComponents) components[dere::to_string(comp)] = sel.nodes_of(comp);
  json frames = json::array();
  for (const auto& f : graph.node_features) frames.push_back(matrix_json(f));
  const json doc{{"sample", sample},
                 {"subject", graph.subject},
                 {"label", graph.label},
                 {"selection", sel.indices},
                 {"components", components},
                 {"template_adjacency", matrix_json(dere::template_adjacency(sel))},
                 {"adjacency", matrix_json(graph.adjacency)},
                 {"node_features", frames}};
  if (g.out.empty())
    std::cout << doc.dump(2) << "\n";
  else
    write_text(g.out, doc.dump(2) + "\n");
  return 0;
}

int cmd_model_inspect(const GlobalOptions& g) {
  const auto c = build_config(g);
  const dere::DereModel model(c.model, c.seed);
  std::cout << "model " << json(c.model).dump() << "\n\n";
  std::cout << std::left << std::setw(28) << "parameter" << std::right << std::setw(10) << "shape"
            << std::setw(10) << "count\n";
  for (const auto& [name, t] : model.params())
    std::cout << std::left << std::setw(28) << name << std::right << std::setw(10)
              << (std::to_string(t.rows()) + "x" + std::to_string(t.cols())) << std::setw(9)
              << t.value().size() << "\n";
  std::cout << "\n";
  for (const auto& [module, n] : model.parameter_counts())
    std::cout << std::left << std::setw(28) << module << std::right << std::setw(19) << n << "\n";
  std::cout << std::left << std::setw(28) << "total" << std::right << std::setw(19)
            << model.params().num_scalars() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Micro-expression recognition with graph feature decomposition and reconstruction"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "base settings before --config")
      ->check(CLI::IsMember({"default", "benchmark"}));
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out", g.out, "output directory (or file for graph dump)");
  app.add_option("--data", g.data, "JSON-lines dataset; synthetic when omitted");
  app.add_option("--threads", g.threads, "concurrent LOSO folds")->check(CLI::PositiveNumber);
  app.add_option("--epochs", g.epochs, "training epochs")->check(CLI::NonNegativeNumber);
  app.add_option("--variant", g.variant, "backbone, backbone+adm or backbone+adm+rrm");
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress warnings");

  auto* train = app.add_subcommand("train", "train one model on the whole dataset");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
  std::string checkpoint;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  auto* loso = app.add_subcommand("loso", "leave-one-subject-out cross-validation");
  auto* ablate = app.add_subcommand("ablate", "module and loss ablation tables");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  int seeds = 5;
  gradcheck->add_option("--seeds", seeds, "random instances per check")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth-data", "write a synthetic landmark dataset");
  int classes = 5, subjects = 10, per_subject = 2;
  double noise = dere::DataConfig{}.noise;
  std::uint64_t synth_seed = dere::DataConfig{}.seed;
  std::string synth_out;
  synth->add_option("--classes", classes, "number of classes (2-8)")->check(CLI::Range(2, 8));
  synth->add_option("--subjects", subjects, "number of subjects")->check(CLI::Range(2, 999));
  synth->add_option("--per-subject", per_subject, "samples per class and subject")
      ->check(CLI::PositiveNumber);
  synth->add_option("--noise", noise, "landmark noise sigma in pixels")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output JSON-lines path ('-' for stdout)");

  auto* graph = app.add_subcommand("graph", "graph utilities");
  graph->require_subcommand(1);
  auto* dump = graph->add_subcommand("dump", "print selection, adjacency and node features");
  std::size_t sample = 0;
  dump->add_option("--sample", sample, "sample index")->required();

  auto* model_cmd = app.add_subcommand("model", "model utilities");
  model_cmd->require_subcommand(1);
  auto* inspect = model_cmd->add_subcommand("inspect", "list parameters and counts");

  CLI11_PARSE(app, argc, argv);
  dere::set_warnings_enabled(!quiet);

  try {
    if (*train) return cmd_train(g);
    if (*evaluate) return cmd_evaluate(g, checkpoint);
    if (*loso) return cmd_loso(g);
    if (*ablate) return cmd_ablate(g);
    if (*gradcheck) return cmd_gradcheck(seeds);
    if (*synth) return cmd_synth(classes, subjects, per_subject, noise, synth_seed, synth_out);
    if (*dump) return cmd_graph_dump(g, sample);
    if (*inspect) return cmd_model_inspect(g);
  } catch (const dere::InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const dere::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
