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

#include "dere/losses.hpp"

#include <cmath>

#include "dere/error.hpp"

namespace dere {

void LossWeights::validate() const {
  for (double v : {mean_center, weight_center, balance})
    if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"lambda1", w.mean_center}, {"lambda2", w.weight_center}, {"lambda3", w.balance}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w.mean_center = j.value("lambda1", w.mean_center);
  w.weight_center = j.value("lambda2", w.weight_center);
  w.balance = j.value("lambda3", w.balance);
}

Tensor loss_me(const Tensor& logits, std::span<const int> labels) {
  return ad::softmax_cross_entropy(logits, labels);
}

Tensor loss_mc(const Tensor& action_features, Index actions) {
  if (actions <= 0 || action_features.rows() % actions != 0)
    throw ShapeError("loss_mc: " + action_features.shape_str() + " is not a stack of " +
                     std::to_string(actions) + "-row blocks");
  const Index n = action_features.rows() / actions;
  const Matrix& v = action_features.value();
  // running mean, exact when all blocks are identical
  Matrix centers = v.topRows(actions);
  for (Index b = 1; b < n; ++b)
    centers += (v.middleRows(b * actions, actions) - centers) / static_cast<double>(b + 1);
  Matrix tiled(v.rows(), v.cols());
  for (Index b = 0; b < n; ++b) tiled.middleRows(b * actions, actions) = centers;
  return ad::scale(ad::sq_frobenius(ad::sub(action_features, Tensor(std::move(tiled)))),
                   0.5 / static_cast<double>(n));
}

WeightCenterTable::WeightCenterTable(int num_classes, Index width, double rate, Mode mode)
    : centers_(Matrix::Constant(num_classes, width, 1.0 / static_cast<double>(width))),
      rate_(rate),
      mode_(mode) {
  if (num_classes < 1 || width < 1) throw ConfigError("weight centers: empty table");
  if (!(rate > 0 && rate <= 1)) throw ConfigError("weight centers: rate must be in (0, 1]");
}

void WeightCenterTable::update(const Matrix& weights, std::span<const int> labels) {
  if (weights.rows() != static_cast<Index>(labels.size()) || weights.cols() != width())
    throw ShapeError("weight centers: update expects (N x " + std::to_string(width()) + ")");
  Matrix sums = Matrix::Zero(centers_.rows(), width());
  std::vector<int> counts(static_cast<std::size_t>(centers_.rows()), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || l >= num_classes())
      throw ValidationError("weight centers: unseen class label " + std::to_string(l));
    sums.row(l) += weights.row(static_cast<Index>(i));
    ++counts[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < num_classes(); ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) continue;
    const auto mean = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    if (mode_ == Mode::batch)
      centers_.row(c) = mean;
    else
      centers_.row(c) += rate_ * (mean - centers_.row(c));
  }
}

nlohmann::json WeightCenterTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < centers_.rows(); ++r)
    rows.push_back(std::vector<double>(centers_.row(r).data(), centers_.row(r).data() + width()));
  return {{"rate", rate_}, {"mode", mode_ == Mode::ema ? "ema" : "batch"}, {"centers", rows}};
}

namespace {

Tensor as_rows(const Tensor& weights, Index width, const char* op) {
  if (weights.cols() == width) return weights;
  if (weights.cols() == 1 && weights.rows() % width == 0)
    return ad::reshape(weights, weights.rows() / width, width);
  throw ShapeError(std::string(op) + ": weights " + weights.shape_str() +
                   " do not match width " + std::to_string(width));
}

}  // namespace

Tensor loss_wc(const Tensor& weights, std::span<const int> labels,
               const WeightCenterTable& table) {
  const Tensor w = as_rows(weights, table.width(), "loss_wc");
  const Index n = w.rows();
  if (n != static_cast<Index>(labels.size()))
    throw ShapeError("loss_wc: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " weight rows");
  Matrix targets(n, table.width());
  for (Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= table.num_classes())
      throw ValidationError("loss_wc: unseen class label " + std::to_string(l));
    targets.row(i) = table.centers().row(l);
  }
  return ad::scale(ad::sq_frobenius(ad::sub(w, Tensor(std::move(targets)))),
                   1.0 / static_cast<double>(n));
}

Tensor loss_b(const Tensor& weights, Index width) {
  const Tensor w = as_rows(weights, width, "loss_b");
  const Tensor uniform(Matrix::Constant(1, width, 1.0 / static_cast<double>(width)));
  return ad::sq_frobenius(ad::sub(ad::mean_over_batch(w), uniform));
}

Tensor loss_total(const LossTerms& terms, const LossWeights& weights) {
  weights.validate();
  auto check = [](const Tensor& t, const char* name) {
    if (t.defined() && !std::isfinite(t.item()))
      throw InvariantError(std::string("non-finite loss term ") + name);
  };
  if (!terms.me.defined()) throw InvariantError("loss_total: L_ME is required");
  check(terms.me, "L_ME");
  check(terms.mc, "L_MC");
  check(terms.wc, "L_WC");
  check(terms.b, "L_B");
  Tensor total = terms.me;
  auto add = [&total](const Tensor& t, double lambda) {
    if (t.defined() && lambda != 0.0) total = ad::add(total, ad::scale(t, lambda));
  };
  add(terms.mc, weights.mean_center);
  add(terms.wc, weights.weight_center);
  add(terms.b, weights.balance);
  return total;
}

}  // namespace dere
