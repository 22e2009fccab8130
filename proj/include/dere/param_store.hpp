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

#ifndef DERE_PARAM_STORE_HPP_
#define DERE_PARAM_STORE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dere/tensor.hpp"

namespace dere::ad {

/// Named trainable parameters in insertion order. Names are unique and
/// shapes are fixed once a parameter is added.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  /// Registers a new leaf that requires grad. Throws ConfigError on a
  /// duplicate name.
  Tensor add(const std::string& name, Matrix init);

  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  Index num_scalars() const;
  std::vector<std::string> names() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();

  /// Copies values from `other`. Names and shapes must match exactly.
  void assign_values(const ParamStore& other);
  /// Independent copy with fresh leaves (no shared storage, grads zeroed).
  ParamStore clone() const;

  /// FNV-1a over names, shapes and the raw bytes of every value.
  std::uint64_t fingerprint() const;

  nlohmann::json to_json() const;
  /// Overwrites values of existing parameters from a checkpoint document.
  /// Rejects unknown or missing names and any shape mismatch.
  void load_json(const nlohmann::json& doc);

 private:
  std::vector<Entry> entries_;
};

/// Writes {"params": ..., "meta": meta} as JSON.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& meta = nlohmann::json::object());
/// Reads a checkpoint into `params` and returns its "meta" object.
nlohmann::json load_checkpoint(const std::filesystem::path& path, ParamStore& params);

}  // namespace dere::ad

#endif  // DERE_PARAM_STORE_HPP_
