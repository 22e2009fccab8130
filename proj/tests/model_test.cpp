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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dere/error.hpp"
#include "dere/grad_check.hpp"
#include "dere/losses.hpp"
#include "dere/model.hpp"
#include "oracles.hpp"

namespace dere {
namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.hidden_channels = 5;
  c.feature_channels = 4;
  c.num_actions = 2;
  c.relation_channels = 3;
  c.num_classes = 5;
  return c;
}

std::vector<StGraph> random_graphs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<StGraph> out;
  for (int i = 0; i < n; ++i) {
    StGraph g;
    for (auto& x : g.node_features) x = oracle::random_matrix(31, 2, rng);
    g.label = i % 5;
    out.push_back(std::move(g));
  }
  return out;
}

Matrix val(const DereModel& m, const std::string& name) { return m.params().at(name).value(); }

// Per-frame graph conv and width-3 temporal conv written as loops.
Matrix backbone_oracle(const DereModel& m, const StGraph& g) {
  std::array<Matrix, 3> x = g.node_features;
  for (int layer = 0; layer < 2; ++layer) {
    const std::string pre = "backbone." + std::to_string(layer);
    std::array<Matrix, 3> h;
    for (int t = 0; t < 3; ++t)
      h[t] = oracle::graph_conv(m.adjacency(), x[t], val(m, pre + ".gc.weight"), val(m, pre + ".gc.bias"));
    const int t_out = layer == 0 ? 3 : 1;
    std::array<Matrix, 3> y;
    for (int t = 0; t < t_out; ++t) {
      const int centre = layer == 0 ? t : 1;
      Matrix acc = Matrix::Zero(31, h[0].cols());
      for (int k = 0; k < 3; ++k) {
        const int src = centre + k - 1;
        if (src < 0 || src > 2) continue;
        acc += oracle::matmul(h[src], val(m, pre + ".tc.weight." + std::to_string(k)));
      }
      const Matrix b = val(m, pre + ".tc.bias");
      for (Index i = 0; i < acc.rows(); ++i)
        for (Index j = 0; j < acc.cols(); ++j) acc(i, j) = std::max(0.0, acc(i, j) + b(0, j));
      y[t] = acc;
    }
    x = y;
  }
  return x[0];
}

TEST(BackboneTest, OutputShape) {
  const DereModel m(small_config(), 1);
  for (int b : {1, 3}) {
    const auto graphs = random_graphs(b, 2);
    const Tensor xb = m.backbone_forward(m.stack_frames(graphs));
    EXPECT_EQ(xb.rows(), 31 * b);
    EXPECT_EQ(xb.cols(), 4);
  }
}

TEST(BackboneTest, ZeroInputGivesZeroOutput) {
  const DereModel m(small_config(), 3);
  StGraph g;
  for (auto& x : g.node_features) x = Matrix::Zero(31, 2);
  const std::vector<StGraph> batch{g};
  EXPECT_TRUE(m.backbone_forward(m.stack_frames(batch)).value().isZero(0.0));
}

TEST(BackboneTest, IdentityAdjacencyReducesToDenseLayer) {
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(62, 3, rng);
  const Matrix w = oracle::random_matrix(3, 5, rng);
  const Matrix b = oracle::random_matrix(1, 5, rng);
  const Matrix out = graph_conv(Matrix::Identity(31, 31), Tensor(x), Tensor(w), Tensor(b)).value();
  for (Index i = 0; i < 62; ++i)
    for (Index j = 0; j < 5; ++j) {
      double s = b(0, j);
      for (Index k = 0; k < 3; ++k) s += x(i, k) * w(k, j);
      EXPECT_NEAR(out(i, j), std::max(0.0, s), 1e-14);
    }
}

TEST(BackboneTest, MatchesLoopOracle) {
  const DereModel m(small_config(), 5);
  const auto graphs = random_graphs(3, 6);
  const Matrix xb = m.backbone_forward(m.stack_frames(graphs)).value();
  for (int b = 0; b < 3; ++b)
    EXPECT_LT((xb.middleRows(31 * b, 31) - backbone_oracle(m, graphs[b])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdmTest, ShapesAndSimplexRows) {
  ModelConfig cfg = small_config();
  cfg.num_actions = 3;
  const DereModel m(cfg, 7);
  std::mt19937_64 rng(8);
  const Tensor xb(oracle::random_matrix(31 * 2, 4, rng));
  const auto out = m.adm_forward(xb);
  EXPECT_EQ(out.maps[0].rows(), 2 * 10);
  EXPECT_EQ(out.maps[1].rows(), 2 * 9);
  EXPECT_EQ(out.maps[2].rows(), 2 * 12);
  for (const auto& map : out.maps) {
    EXPECT_EQ(map.cols(), 3);
    const Matrix& v = map.value();
    for (Index i = 0; i < v.rows(); ++i) EXPECT_NEAR(v.row(i).sum(), 1.0, 1e-9);
    EXPECT_TRUE((v.array() > 0).all());
  }
  EXPECT_EQ(out.action_features.rows(), 2 * 9);
  EXPECT_EQ(out.action_features.cols(), 4);
}

TEST(AdmTest, ConstantLogitsGiveScaledColumnMean) {
  DereModel m(small_config(), 9);
  for (Component c : kComponents) {
    m.params().at("adm." + to_string(c) + ".tc.weight").mutable_value().setZero();
    m.params().at("adm." + to_string(c) + ".tc.bias").mutable_value().setConstant(0.3);
  }
  std::mt19937_64 rng(10);
  const Matrix xb = oracle::random_matrix(31, 4, rng);
  const auto out = m.adm_forward(Tensor(xb));
  const auto parts = split_components(xb, m.selection());
  const double na = 2.0;
  for (int c = 0; c < 3; ++c) {
    EXPECT_TRUE(out.maps[c].value().isApprox(Matrix::Constant(parts[c].rows(), 2, 0.5), 1e-15));
    const Eigen::RowVectorXd expect = parts[c].colwise().mean() * (parts[c].rows() / na);
    for (int j = 0; j < 2; ++j)
      EXPECT_TRUE(out.action_features.value().row(2 * c + j).isApprox(expect, 1e-12));
  }
}

TEST(AdmTest, MatchesLoopOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg = small_config();
    cfg.num_actions = 2 + trial % 3;
    const DereModel m(cfg, 100 + trial);
    const Matrix xb = oracle::random_matrix(31 * 2, 4, rng);
    const Matrix fa = m.adm_forward(Tensor(xb)).action_features.value();
    for (int b = 0; b < 2; ++b) {
      const auto parts = split_components(xb.middleRows(31 * b, 31), m.selection());
      for (Component c : kComponents) {
        const std::string pre = "adm." + to_string(c);
        const auto ref = oracle::adm_component(m.subgraphs()[static_cast<int>(c)].adjacency,
                                               parts[static_cast<int>(c)], val(m, pre + ".gc.weight"),
                                               val(m, pre + ".gc.bias"), val(m, pre + ".tc.weight"),
                                               val(m, pre + ".tc.bias"));
        const Index row = b * cfg.total_actions() + static_cast<int>(c) * cfg.num_actions;
        EXPECT_LT((fa.middleRows(row, cfg.num_actions) - ref.features).cwiseAbs().maxCoeff(), 1e-10);
      }
    }
  }
}

TEST(AdmTest, PermutationWithinComponentLeavesActionFeatures) {
  NodeSelection permuted = default_selection();
  std::reverse(permuted.indices.begin(), permuted.indices.begin() + 10);      // eyebrows
  std::reverse(permuted.indices.begin() + 19, permuted.indices.end());        // mouth
  const DereModel a(small_config(), 12);
  const DereModel b(small_config(), 12, permuted);
  std::mt19937_64 rng(13);
  const Matrix xb = oracle::random_matrix(31, 4, rng);
  Matrix xb_perm(31, 4);
  for (int i = 0; i < 31; ++i) {
    const auto& src = default_selection().indices;
    const int pos = static_cast<int>(std::find(src.begin(), src.end(), permuted.indices[i]) - src.begin());
    xb_perm.row(i) = xb.row(pos);
  }
  const Matrix fa = a.adm_forward(Tensor(xb)).action_features.value();
  const Matrix fb = b.adm_forward(Tensor(xb_perm)).action_features.value();
  EXPECT_LT((fa - fb).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(AdmTest, SharedParametersOption) {
  ModelConfig cfg = small_config();
  cfg.share_adm_params = true;
  const DereModel shared(cfg, 1);
  const DereModel separate(small_config(), 1);
  EXPECT_TRUE(shared.params().contains("adm.shared.gc.weight"));
  EXPECT_FALSE(shared.params().contains("adm.eyebrow.gc.weight"));
  EXPECT_EQ(3 * shared.parameter_counts().at("adm"), separate.parameter_counts().at("adm"));
}

TEST(RrmTest, ShapesAndSimplexWeights) {
  const DereModel m(small_config(), 14);
  std::mt19937_64 rng(15);
  const Tensor fa(oracle::random_matrix(3 * 6, 4, rng));
  const auto out = m.rrm_forward(fa);
  EXPECT_EQ(out.weights.rows(), 3 * 6);
  EXPECT_EQ(out.weights.cols(), 1);
  EXPECT_EQ(out.me_features.rows(), 3);
  EXPECT_EQ(out.me_features.cols(), 4);
  EXPECT_EQ(out.relation_features.cols(), 3);
  for (int b = 0; b < 3; ++b) {
    const auto w = out.weights.value().middleRows(6 * b, 6);
    EXPECT_NEAR(w.sum(), 1.0, 1e-9);
    EXPECT_TRUE((w.array() >= 0).all());
    // F_ME is the W-weighted combination of F_A rows
    const Matrix combo = w.transpose() * fa.value().middleRows(6 * b, 6);
    EXPECT_TRUE(out.me_features.value().row(b).isApprox(combo.row(0), 1e-12));
  }
}

TEST(RrmTest, UniformWeightsGiveColumnMean) {
  DereModel m(small_config(), 16);
  m.params().at("rrm.tc.weight").mutable_value().setZero();
  m.params().at("rrm.tc.bias").mutable_value() << 0.5, -1.0, 2.0;
  std::mt19937_64 rng(17);
  const Matrix fa = oracle::random_matrix(6, 4, rng);
  const auto out = m.rrm_forward(Tensor(fa));
  EXPECT_TRUE(out.weights.value().isApprox(Matrix::Constant(6, 1, 1.0 / 6.0), 1e-15));
  EXPECT_TRUE(out.me_features.value().row(0).isApprox(fa.colwise().mean(), 1e-12));
}

TEST(RrmTest, AllZeroRelationFeaturesFallBackToUniform) {
  set_warnings_enabled(false);
  DereModel m(small_config(), 18);
  m.params().at("rrm.tc.weight").mutable_value().setZero();
  m.params().at("rrm.tc.bias").mutable_value().setZero();
  const int before = warning_count();
  std::mt19937_64 rng(19);
  const auto out = m.rrm_forward(Tensor(oracle::random_matrix(6, 4, rng)));
  EXPECT_EQ(out.zero_weight_blocks, 1);
  EXPECT_GT(warning_count(), before);
  EXPECT_TRUE(out.weights.value().isApprox(Matrix::Constant(6, 1, 1.0 / 6.0)));
  set_warnings_enabled(true);
}

TEST(RrmTest, MatchesLoopOracle) {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg = small_config();
    cfg.normalize_weights = trial % 4 != 0;
    const DereModel m(cfg, 200 + trial);
    const Matrix fa = oracle::random_matrix(2 * 6, 4, rng);
    const auto out = m.rrm_forward(Tensor(fa));
    for (int b = 0; b < 2; ++b) {
      const auto ref = oracle::rrm(m.relation_adjacency(), fa.middleRows(6 * b, 6),
                                   val(m, "rrm.gc.weight"), val(m, "rrm.gc.self"), val(m, "rrm.gc.bias"),
                                   val(m, "rrm.tc.weight"), val(m, "rrm.tc.bias"),
                                   cfg.normalize_weights);
      EXPECT_LT((out.weights.value().middleRows(6 * b, 6) - ref.weights).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT((out.me_features.value().row(b) - ref.me).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(ClassifyTest, ZeroHeadGivesUniformProbabilities) {
  DereModel m(small_config(), 21);
  m.params().at("head.weight").mutable_value().setZero();
  const auto graphs = random_graphs(2, 22);
  const Tensor logits = m.forward(graphs).logits;
  EXPECT_EQ(logits.cols(), 5);
  const Matrix p = ad::softmax_rows(logits).value();
  EXPECT_TRUE(p.isApprox(Matrix::Constant(2, 5, 0.2), 1e-15));
}

TEST(ForwardTest, AllVariantsProduceKLogits) {
  const DereModel m(small_config(), 23);
  const auto graphs = random_graphs(4, 24);
  for (Variant v : {Variant::backbone_only, Variant::backbone_adm, Variant::full}) {
    const auto r = m.forward(graphs, v);
    EXPECT_EQ(r.logits.rows(), 4);
    EXPECT_EQ(r.logits.cols(), 5);
    EXPECT_TRUE(r.logits.value().allFinite());
  }
}

TEST(ForwardTest, FullVariantIsComposition) {
  const DereModel m(small_config(), 25);
  const auto graphs = random_graphs(3, 26);
  const auto r = m.forward(graphs, Variant::full);
  const Tensor xb = m.backbone_forward(m.stack_frames(graphs));
  const Tensor fme = m.rrm_forward(m.adm_forward(xb).action_features).me_features;
  EXPECT_EQ(m.classify(fme).value(), r.logits.value());
}

TEST(ForwardTest, BackboneOnlyIgnoresAdmAndRrm) {
  DereModel m(small_config(), 27);
  const auto graphs = random_graphs(3, 28);
  const Matrix before = m.forward(graphs, Variant::backbone_only).logits.value();
  for (auto& [name, t] : m.params())
    if (name.starts_with("adm.") || name.starts_with("rrm.")) t.mutable_value().array() += 0.37;
  EXPECT_EQ(m.forward(graphs, Variant::backbone_only).logits.value(), before);
}

TEST(ForwardTest, ParameterCountsPerModule) {
  const DereModel m(small_config(), 1);
  const auto counts = m.parameter_counts();
  ASSERT_EQ(counts.size(), 4u);
  // head: C_1 x K + K
  EXPECT_EQ(counts.at("head"), 4 * 5 + 5);
  // rrm: (2 C_1 x C_2 + C_2) + (C_2 x C_2 + C_2)
  EXPECT_EQ(counts.at("rrm"), 2 * 4 * 3 + 3 + 3 * 3 + 3);
  Index total = 0;
  for (const auto& [k, v] : counts) total += v;
  EXPECT_EQ(total, m.params().num_scalars());
}

TEST(ForwardTest, InvalidConfigRejected) {
  ModelConfig c = small_config();
  c.num_actions = 1;
  EXPECT_THROW(DereModel(c, 0), ConfigError);
  c = small_config();
  c.num_classes = 1;
  EXPECT_THROW(DereModel(c, 0), ConfigError);
}

// Cross-entropy through the whole network against central differences.
TEST(EndToEndGradTest, CrossEntropyMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    DereModel m(small_config(), 300 + seed);
    for (auto& [name, t] : m.params())
      if (name.ends_with("bias")) {
        std::mt19937_64 rng(seed + 1);
        t.mutable_value() = 0.1 * oracle::random_matrix(t.rows(), t.cols(), rng);
      }
    const auto graphs = random_graphs(3, 400 + seed);
    std::vector<int> labels;
    for (const auto& g : graphs) labels.push_back(g.label);
    const auto r = ad::grad_check_params(
        [&] { return loss_me(m.forward(graphs).logits, labels); }, m.params());
    EXPECT_TRUE(r.passed) << "seed " << seed << " err " << r.max_relative_error << " in "
                          << r.worst_parameter << "[" << r.worst_index << "]";
  }
}

}  // namespace
}  // namespace dere
