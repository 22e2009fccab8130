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

#ifndef DERE_OPTIM_HPP_
#define DERE_OPTIM_HPP_

#include <map>
#include <string>

#include "dere/param_store.hpp"

namespace dere::ad {

/// Interface shared by the optimizers.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Throws InvariantError naming the parameter if any grad is non-finite;
  /// in that case no parameter is modified. Grads are zeroed afterwards.
  virtual void step(ParamStore& params) = 0;
};

struct SgdOptions {
  Scalar learning_rate = 0.01;
  Scalar momentum = 0.9;
};

/// SGD with heavy-ball momentum: v <- momentum * v + grad; p <- p - lr * v.
/// Grads are zeroed after each step.
class Sgd : public Optimizer {
 public:
  explicit Sgd(SgdOptions options = {}) : options_(options) {}

  void step(ParamStore& params) override;

  const SgdOptions& options() const { return options_; }

 private:
  SgdOptions options_;
  std::map<std::string, Matrix> velocity_;
};

struct AdamOptions {
  Scalar learning_rate = 0.001;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar epsilon = 1e-8;
};

/// Adam with bias-corrected first and second moment estimates.
class Adam : public Optimizer {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(ParamStore& params) override;

  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  long steps_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

}  // namespace dere::ad

#endif  // DERE_OPTIM_HPP_
