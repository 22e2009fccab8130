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

#include "dere/diagnostics.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>

#include "dere/losses.hpp"
#include "dere/model.hpp"
#include "dere/ops.hpp"

namespace dere {

namespace {

using ad::Index;
using ad::Matrix;
using ad::Tensor;

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix random_simplex_rows(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    m.row(i) /= m.row(i).sum();
  }
  return Eigen::Map<const Matrix>(m.data(), m.size(), 1);
}

// Fixed random projection to a scalar with a non-trivial upstream gradient.
Tensor project(const Tensor& y, std::uint64_t seed) {
  return ad::sum(ad::matmul(Tensor(random_matrix(1, y.rows(), seed + 7)),
                            ad::matmul(y, Tensor(random_matrix(y.cols(), 1, seed + 9)))));
}

struct InputCase {
  std::string name;
  std::function<Matrix(std::uint64_t)> input;
  std::function<Tensor(const Tensor&, std::uint64_t)> f;
};

std::function<Matrix(std::uint64_t)> gaussian(Index r, Index c) {
  return [r, c](std::uint64_t s) { return random_matrix(r, c, 1000 + s); };
}

std::vector<InputCase> input_cases() {
  const std::vector<int> labels{0, 2, 2, 1};
  std::vector<InputCase> cases{
      {"matmul", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) {
         return project(ad::matmul(x, Tensor(random_matrix(4, 2, s))), s);
       }},
      {"add", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) {
         return project(ad::add(x, Tensor(random_matrix(3, 4, s))), s);
       }},
      {"sub", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) {
         return project(ad::sub(Tensor(random_matrix(3, 4, s)), x), s);
       }},
      {"add_row", gaussian(1, 4),
       [](const Tensor& b, std::uint64_t s) {
         return project(ad::add_row(Tensor(random_matrix(3, 4, s)), b), s);
       }},
      {"scale", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) { return project(ad::scale(x, -1.7), s); }},
      {"relu", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) { return project(ad::relu(x), s); }},
      {"softmax_rows", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) { return project(ad::softmax_rows(x), s); }},
      {"l1_rowsum", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) { return project(ad::l1_rowsum(x), s); }},
      {"sq_frobenius", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t) { return ad::sq_frobenius(x); }},
      {"sum", gaussian(3, 4), [](const Tensor& x, std::uint64_t) { return ad::sum(x); }},
      {"mean_over_batch", gaussian(6, 4),
       [](const Tensor& x, std::uint64_t s) { return project(ad::mean_over_batch(x, 3), s); }},
      {"concat_rows", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) {
         const std::vector<Tensor> parts{Tensor(random_matrix(2, 4, s)), x, x};
         return project(ad::concat_rows(parts), s);
       }},
      {"gather_rows", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) {
         const std::vector<Index> rows{2, 0, 2, 1};
         return project(ad::gather_rows(x, rows), s);
       }},
      {"reshape", gaussian(3, 4),
       [](const Tensor& x, std::uint64_t s) { return project(ad::reshape(x, 2, 6), s); }},
      {"propagate", gaussian(6, 2),
       [](const Tensor& x, std::uint64_t s) {
         return project(ad::propagate(random_matrix(3, 3, s), x), s);
       }},
      {"block_transpose_matmul", gaussian(6, 2),
       [](const Tensor& m, std::uint64_t s) {
         return project(ad::block_transpose_matmul(m, Tensor(random_matrix(6, 4, s)), 3), s);
       }},
      {"normalize_blocks", gaussian(6, 1),
       [](const Tensor& w, std::uint64_t s) {
         const Tensor positive = ad::add(ad::l1_rowsum(w), Tensor(Matrix::Constant(6, 1, 0.5)));
         return project(ad::normalize_blocks(positive, 3), s);
       }},
      {"softmax_cross_entropy", gaussian(4, 3),
       [labels](const Tensor& z, std::uint64_t) { return ad::softmax_cross_entropy(z, labels); }},
      {"L_ME", gaussian(4, 3),
       [labels](const Tensor& z, std::uint64_t) { return loss_me(z, labels); }},
      {"L_MC", gaussian(24, 3), [](const Tensor& f, std::uint64_t) { return loss_mc(f, 6); }},
      {"L_WC", [](std::uint64_t s) { return random_simplex_rows(4, 6, 2000 + s); },
       [labels](const Tensor& w, std::uint64_t s) {
         WeightCenterTable table(3, 6);
         table.mutable_centers() =
             Eigen::Map<const Matrix>(random_simplex_rows(3, 6, 3000 + s).data(), 3, 6);
         return loss_wc(w, labels, table);
       }},
      {"L_B", [](std::uint64_t s) { return random_simplex_rows(4, 6, 4000 + s); },
       [](const Tensor& w, std::uint64_t) { return loss_b(w, 6); }},
      {"L_total", gaussian(1, 4),
       [](const Tensor& x, std::uint64_t) {
         // each component is a distinct smooth function of x
         const Tensor a = ad::sq_frobenius(x);
         const LossTerms terms{ad::sum(x), a, ad::scale(a, 0.5), ad::sum(ad::relu(x))};
         return loss_total(terms, LossWeights{});
       }},
  };
  return cases;
}

GradSuiteEntry model_case(Variant variant, int seeds, const ad::GradCheckOptions& options) {
  GradSuiteEntry e{"model:" + to_string(variant), seeds, 0.0, true};
  ModelConfig cfg;
  cfg.hidden_channels = 5;
  cfg.feature_channels = 4;
  cfg.num_actions = 2;
  cfg.relation_channels = 3;
  cfg.num_classes = 5;
  cfg.variant = variant;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    DereModel model(cfg, 500 + seed);
    for (auto& [name, t] : model.params())
      if (name.ends_with("bias")) t.mutable_value() = 0.1 * random_matrix(t.rows(), t.cols(), 600 + seed);
    std::vector<StGraph> batch(3);
    std::vector<int> labels;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (int t = 0; t < 3; ++t)
        batch[i].node_features[static_cast<std::size_t>(t)] =
            random_matrix(kNumGraphNodes, 2, 700 + 10 * seed + 3 * i + static_cast<std::uint64_t>(t));
      labels.push_back(static_cast<int>(i) % 5);
    }
    WeightCenterTable centers(5, cfg.total_actions());
    const auto r = ad::grad_check_params(
        [&] {
          const ForwardResult fr = model.forward(batch);
          LossTerms terms;
          terms.me = loss_me(fr.logits, labels);
          if (variant != Variant::backbone_only)
            terms.mc = loss_mc(fr.adm.action_features, cfg.total_actions());
          if (variant == Variant::full) {
            terms.wc = loss_wc(fr.rrm.weights, labels, centers);
            terms.b = loss_b(fr.rrm.weights, cfg.total_actions());
          }
          return loss_total(terms, LossWeights{});
        },
        model.params(), options);
    e.max_relative_error = std::max(e.max_relative_error, r.max_relative_error);
    e.passed = e.passed && r.passed;
  }
  return e;
}

}  // namespace

std::vector<GradSuiteEntry> gradient_suite(int seeds, const ad::GradCheckOptions& options) {
  std::vector<GradSuiteEntry> out;
  for (const auto& c : input_cases()) {
    GradSuiteEntry e{c.name, seeds, 0.0, true};
    for (int s = 0; s < seeds; ++s) {
      const auto seed = static_cast<std::uint64_t>(s);
      const auto r = ad::grad_check([&](const Tensor& x) { return c.f(x, seed); }, c.input(seed), options);
      e.max_relative_error = std::max(e.max_relative_error, r.max_relative_error);
      e.passed = e.passed && r.passed;
    }
    out.push_back(e);
  }
  for (Variant v : {Variant::backbone_only, Variant::backbone_adm, Variant::full})
    out.push_back(model_case(v, seeds, options));
  return out;
}

}  // namespace dere
