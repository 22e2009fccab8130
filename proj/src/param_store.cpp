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

#include "dere/param_store.hpp"

#include <cstring>
#include <fstream>
#include <unordered_set>

#include "dere/error.hpp"

namespace dere::ad {

Tensor ParamStore::add(const std::string& name, Matrix init) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  entries_.push_back({name, Tensor(std::move(init), true)});
  return entries_.back().tensor;
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const Tensor& ParamStore::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw ConfigError("unknown parameter: " + name);
}

Tensor& ParamStore::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

Index ParamStore::num_scalars() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::assign_values(const ParamStore& other) {
  if (other.size() != size()) throw ConfigError("assign_values: parameter count mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& src = other.entries_[i];
    auto& dst = entries_[i];
    if (src.name != dst.name || src.tensor.rows() != dst.tensor.rows() ||
        src.tensor.cols() != dst.tensor.cols())
      throw ConfigError("assign_values: mismatch at parameter " + dst.name);
    dst.tensor.mutable_value() = src.tensor.value();
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.name, e.tensor.value());
  return out;
}

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& e : entries_) {
    mix(e.name.data(), e.name.size());
    const Index shape[2] = {e.tensor.rows(), e.tensor.cols()};
    mix(shape, sizeof(shape));
    mix(e.tensor.value().data(), sizeof(Scalar) * static_cast<std::size_t>(e.tensor.size()));
  }
  return h;
}

nlohmann::json ParamStore::to_json() const {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : entries_) {
    const auto& v = e.tensor.value();
    params.push_back({{"name", e.name},
                      {"shape", {v.rows(), v.cols()}},
                      {"values", std::vector<Scalar>(v.data(), v.data() + v.size())}});
  }
  return params;
}

void ParamStore::load_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ParseError("checkpoint: \"params\" must be an array");
  std::unordered_set<std::string> seen;
  for (const auto& item : doc) {
    const auto name = item.at("name").get<std::string>();
    if (!contains(name)) throw ValidationError("checkpoint: unknown parameter " + name);
    auto& t = at(name);
    const auto shape = item.at("shape").get<std::vector<Index>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols())
      throw ValidationError("checkpoint: shape mismatch for " + name + ": expected " +
                            t.shape_str());
    const auto values = item.at("values").get<std::vector<Scalar>>();
    if (static_cast<Index>(values.size()) != t.size())
      throw ValidationError("checkpoint: value count mismatch for " + name);
    t.mutable_value() = Eigen::Map<const Matrix>(values.data(), t.rows(), t.cols());
    seen.insert(name);
  }
  for (const auto& e : entries_)
    if (!seen.count(e.name)) throw ValidationError("checkpoint: missing parameter " + e.name);
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& meta) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << nlohmann::json{{"format", "dere-checkpoint"}, {"version", 1}, {"meta", meta},
                        {"params", params.to_json()}}
             .dump()
      << '\n';
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, ParamStore& params) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
  if (!doc.contains("params")) throw ParseError("checkpoint: missing \"params\"");
  params.load_json(doc.at("params"));
  return doc.value("meta", nlohmann::json::object());
}

}  // namespace dere::ad
