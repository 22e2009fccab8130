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

#include "dere/error.hpp"

#include <atomic>
#include <iostream>

namespace dere {
namespace {
std::atomic<bool> g_enabled{true};
std::atomic<int> g_count{0};
}  // namespace

void warn(const std::string& message) {
  g_count.fetch_add(1);
  if (g_enabled.load()) std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_enabled.store(enabled); }

int warning_count() { return g_count.load(); }

}  // namespace dere
