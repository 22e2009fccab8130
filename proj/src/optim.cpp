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

#include "dere/optim.hpp"

#include <cmath>

#include "dere/error.hpp"

namespace dere::ad {

namespace {

void check_finite(const ParamStore& params) {
  for (const auto& [name, tensor] : params)
    if (!tensor.grad().allFinite()) throw InvariantError("non-finite gradient in parameter " + name);
}

}  // namespace

void Sgd::step(ParamStore& params) {
  check_finite(params);

  for (auto& [name, tensor] : params) {
    auto it = velocity_.find(name);
    if (it == velocity_.end())
      it = velocity_.emplace(name, Matrix::Zero(tensor.rows(), tensor.cols())).first;
    Matrix& v = it->second;
    v = options_.momentum * v + tensor.grad();
    tensor.mutable_value() -= options_.learning_rate * v;
    tensor.zero_grad();
  }
}

void Adam::step(ParamStore& params) {
  check_finite(params);
  ++steps_;
  const Scalar c1 = 1.0 - std::pow(options_.beta1, static_cast<Scalar>(steps_));
  const Scalar c2 = 1.0 - std::pow(options_.beta2, static_cast<Scalar>(steps_));
  for (auto& [name, tensor] : params) {
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      const Matrix zero = Matrix::Zero(tensor.rows(), tensor.cols());
      it = moments_.emplace(name, std::make_pair(zero, zero)).first;
    }
    auto& [m, v] = it->second;
    const Matrix& g = tensor.grad();
    m = options_.beta1 * m + (1.0 - options_.beta1) * g;
    v = options_.beta2 * v + (1.0 - options_.beta2) * g.cwiseProduct(g);
    tensor.mutable_value().array() -=
        options_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + options_.epsilon);
    tensor.zero_grad();
  }
}

}  // namespace dere::ad
