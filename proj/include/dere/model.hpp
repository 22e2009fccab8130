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

#ifndef DERE_MODEL_HPP_
#define DERE_MODEL_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "json.hpp"

#include "dere/ops.hpp"
#include "dere/param_store.hpp"
#include "dere/st_graph.hpp"

namespace dere {

using ad::Index;
using ad::Tensor;

/// Which parts of the network feed the classifier.
enum class Variant { backbone_only, backbone_adm, full };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelConfig {
  int hidden_channels = 16;    // backbone layer-1 output width
  int feature_channels = 16;   // C_1, backbone output width
  int num_actions = 3;         // N_a, action features per component
  int relation_channels = 16;  // C_2, relation mixer width
  int num_classes = 5;
  bool normalize_weights = true;   // divide W by its sum
  bool share_adm_params = false;   // one mapper for all three components
  Variant variant = Variant::full;

  void validate() const;
  int total_actions() const { return 3 * num_actions; }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Building blocks. Inputs are stacks of per-sample row blocks.

/// ReLU(A X W + b) applied per block of adjacency.rows() rows.
Tensor graph_conv(const Matrix& adjacency, const Tensor& x, const Tensor& weight,
                  const Tensor& bias);

/// Width-3 convolution across the frame axis, per node. `same` keeps the
/// frame count with zero padding; otherwise (valid) it must be exactly 3
/// frames in and 1 out.
std::vector<Tensor> temporal_conv(std::span<const Tensor> frames, std::span<const Tensor> taps,
                                  const Tensor& bias, bool same);

struct AdmOutput {
  std::array<Tensor, 3> raw_maps;  // M'_A per component, (B*N_f) x N_a
  std::array<Tensor, 3> maps;      // M_A = row-softmax(M'_A)
  Tensor action_features;          // F_A, (B*3N_a) x C_1, per sample [e; n; m]
};

struct RrmOutput {
  Tensor relation_features;  // F', (B*3N_a) x C_2
  Tensor weights;            // W, (B*3N_a) x 1
  Tensor me_features;        // F_ME, B x C_1
  int zero_weight_blocks = 0;
};

struct ForwardResult {
  Index batch = 0;
  Tensor basic_features;  // X_B, (B*31) x C_1
  AdmOutput adm;          // undefined tensors for backbone_only
  RrmOutput rrm;          // undefined tensors unless full
  Tensor pooled;          // classifier input, B x C_1
  Tensor logits;          // B x K
};

/// Graph backbone, action decomposition, relation reconstruction and
/// a linear classifier head over one shared parameter store.
class DereModel {
 public:
  DereModel(const ModelConfig& config, std::uint64_t seed,
            const NodeSelection& selection = default_selection());

  const ModelConfig& config() const { return config_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  const NodeSelection& selection() const { return selection_; }
  const Matrix& adjacency() const { return adjacency_; }
  const std::array<SubGraph, 3>& subgraphs() const { return subgraphs_; }
  const Matrix& relation_adjacency() const { return relation_adjacency_; }

  ForwardResult forward(std::span<const StGraph> batch) const;
  ForwardResult forward(std::span<const StGraph> batch, Variant variant) const;

  /// Three frame tensors, each (B*31) x 2, from the batch's node features.
  std::array<Tensor, 3> stack_frames(std::span<const StGraph> batch) const;

  Tensor backbone_forward(const std::array<Tensor, 3>& frames) const;
  AdmOutput adm_forward(const Tensor& basic_features) const;
  RrmOutput rrm_forward(const Tensor& action_features) const;
  Tensor classify(const Tensor& features) const;

  /// Scalar count per top-level module ("backbone", "adm", "rrm", "head").
  std::map<std::string, Index> parameter_counts() const;

 private:
  const Tensor& p(const std::string& name) const { return params_.at(name); }
  std::string adm_prefix(Component c) const;

  ModelConfig config_;
  NodeSelection selection_;
  Matrix adjacency_;
  std::array<SubGraph, 3> subgraphs_;
  Matrix relation_adjacency_;
  ad::ParamStore params_;
};

}  // namespace dere

#endif  // DERE_MODEL_HPP_
