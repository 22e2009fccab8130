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

#include "dere/report.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "dere/error.hpp"

namespace dere {

namespace fs = std::filesystem;
using nlohmann::json;

void write_step_log(std::ostream& out, std::span<const StepLog> steps) {
  out << "step,epoch,L_ME,L_MC,L_WC,L_B,total\n";
  out << std::setprecision(10);
  for (const auto& s : steps)
    out << s.step << ',' << s.epoch << ',' << s.me << ',' << s.mc << ',' << s.wc << ',' << s.b
        << ',' << s.total << '\n';
}

void write_curves(std::ostream& out, const RunReport& report) {
  out << "fold,epoch,L_ME,L_MC,L_WC,L_B,total\n";
  out << std::setprecision(10);
  for (std::size_t f = 0; f < report.curves.size(); ++f)
    for (std::size_t e = 0; e < report.curves[f].size(); ++e) {
      const auto& c = report.curves[f][e];
      out << report.folds[f].subject << ',' << e << ',' << c.me << ',' << c.mc << ',' << c.wc
          << ',' << c.b << ',' << c.total << '\n';
    }
}

std::string format_report(const RunReport& report) {
  std::ostringstream os;
  const auto& c = report.config;
  os << "variant " << to_string(c.model.variant) << "  C_1=" << c.model.feature_channels
     << " N_a=" << c.model.num_actions << " C_2=" << c.model.relation_channels
     << "  lambdas=(" << c.losses.mean_center << ", " << c.losses.weight_center << ", "
     << c.losses.balance << ")  seed=" << c.seed << '\n';
  os << "fold      n   acc\n";
  for (const auto& f : report.fold_reports)
    os << std::left << std::setw(8) << f.subject << std::right << std::setw(3)
       << f.predictions.size() << "  " << std::fixed << std::setprecision(3) << f.accuracy << '\n';
  os << "pooled Acc " << std::fixed << std::setprecision(2) << 100.0 * report.metrics.accuracy
     << "%  " << (c.micro_f1 ? "micro" : "macro") << " F1 " << std::setprecision(3) << report.f1()
     << "  (" << report.metrics.correct << "/" << report.metrics.total << ")\n";
  if (!report.metrics.undefined_f1.empty()) {
    os << "classes with undefined F1 (reported as 0):";
    for (int k : report.metrics.undefined_f1) os << ' ' << k;
    os << '\n';
  }
  return os.str();
}

void write_run_directory(const fs::path& dir, const RunReport& report) {
  fs::create_directories(dir / "folds");
  fs::create_directories(dir / "checkpoints");
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
  };
  write(dir / "config.json", json(report.config).dump(2) + "\n");
  const json full = report.to_json();
  for (const auto& f : full.at("folds"))
    write(dir / "folds" / (f.at("subject").get<std::string>() + ".json"), f.dump(2) + "\n");
  write(dir / "report.json", full.dump(2) + "\n");
  write(dir / "report.txt", format_report(report));
  std::ofstream curves(dir / "curves.csv");
  write_curves(curves, report);
}

}  // namespace dere
