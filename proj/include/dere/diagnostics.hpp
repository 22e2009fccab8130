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

#ifndef DERE_DIAGNOSTICS_HPP_
#define DERE_DIAGNOSTICS_HPP_

#include <string>
#include <vector>

#include "dere/grad_check.hpp"

namespace dere {

struct GradSuiteEntry {
  std::string name;
  int seeds = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Central-difference checks of every differentiable op, every loss, and
/// the three model variants end to end (C_1 = 4, N_a = 2, C_2 = 3), each
/// over `seeds` random instances.
std::vector<GradSuiteEntry> gradient_suite(int seeds = 5,
                                           const ad::GradCheckOptions& options = {});

}  // namespace dere

#endif  // DERE_DIAGNOSTICS_HPP_
