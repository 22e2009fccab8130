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

#ifndef DERE_REPORT_HPP_
#define DERE_REPORT_HPP_

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "dere/harness.hpp"

namespace dere {

/// CSV header plus one line per optimizer step:
/// step,epoch,L_ME,L_MC,L_WC,L_B,total
void write_step_log(std::ostream& out, std::span<const StepLog> steps);

/// fold,epoch,L_ME,L_MC,L_WC,L_B,total
void write_curves(std::ostream& out, const RunReport& report);

/// Human-readable summary: config digest, per-fold accuracy, pooled metrics.
std::string format_report(const RunReport& report);

/// Writes config.json, folds/<subject>.json, report.json, report.txt and
/// curves.csv under `dir`, and creates dir/checkpoints.
void write_run_directory(const std::filesystem::path& dir, const RunReport& report);

}  // namespace dere

#endif  // DERE_REPORT_HPP_
