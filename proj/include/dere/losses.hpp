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

#ifndef DERE_LOSSES_HPP_
#define DERE_LOSSES_HPP_

#include <span>
#include <string>

#include "json.hpp"

#include "dere/ops.hpp"

namespace dere {

using ad::Index;
using ad::Matrix;
using ad::Tensor;

/// Trade-off weights of the auxiliary losses.
struct LossWeights {
  double mean_center = 1.0;    // lambda_1
  double weight_center = 1.0;  // lambda_2
  double balance = 0.1;        // lambda_3

  void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// Mean softmax cross-entropy over a (N x K) logit batch.
Tensor loss_me(const Tensor& logits, std::span<const int> labels);

/// Mean center loss over action features stacked as N blocks of `actions`
/// rows: (1/2N) sum_n sum_i ||F_A[n, i] - c_i||^2, where c_i is the batch
/// mean of row i and is held constant for differentiation.
Tensor loss_mc(const Tensor& action_features, Index actions);

/// Per-class weight centers, one row per class.
class WeightCenterTable {
 public:
  enum class Mode { ema, batch };

  WeightCenterTable() = default;
  /// Centers start uniform at 1 / width.
  WeightCenterTable(int num_classes, Index width, double rate = 0.5, Mode mode = Mode::ema);

  const Matrix& centers() const { return centers_; }
  Matrix& mutable_centers() { return centers_; }
  int num_classes() const { return static_cast<int>(centers_.rows()); }
  Index width() const { return centers_.cols(); }
  double rate() const { return rate_; }
  Mode mode() const { return mode_; }

  /// Moves each center present in the batch toward (ema) or onto (batch)
  /// its class mean. `weights` is (N x width).
  void update(const Matrix& weights, std::span<const int> labels);

  nlohmann::json to_json() const;

 private:
  Matrix centers_;
  double rate_ = 0.5;
  Mode mode_ = Mode::ema;
};

/// (1/N) sum_i ||W_i - center(l_i)||^2 with W given as (N*width x 1) or
/// (N x width). Centers are constants. Does not update the table.
Tensor loss_wc(const Tensor& weights, std::span<const int> labels,
               const WeightCenterTable& table);

/// ||mean_i W_i - 1/width||^2.
Tensor loss_b(const Tensor& weights, Index width);

struct LossTerms {
  Tensor me;
  Tensor mc;  // undefined when the variant has no action features
  Tensor wc;  // undefined when the variant has no weights
  Tensor b;
};

/// L_ME + lambda_1 L_MC + lambda_2 L_WC + lambda_3 L_B. Terms with a zero
/// weight or an undefined tensor are left out of the graph entirely.
/// Throws InvariantError naming any non-finite term.
Tensor loss_total(const LossTerms& terms, const LossWeights& weights);

}  // namespace dere

#endif  // DERE_LOSSES_HPP_
