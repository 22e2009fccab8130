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

#include <cmath>
#include <random>

#include "dere/error.hpp"
#include "dere/grad_check.hpp"
#include "dere/losses.hpp"
#include "oracles.hpp"

namespace dere {
namespace {

Matrix simplex_rows(Index n, Index m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix w(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) w(i, j) = u(rng);
    w.row(i) /= w.row(i).sum();
  }
  return w;
}

Matrix as_column(const Matrix& rows) {
  return Eigen::Map<const Matrix>(rows.data(), rows.size(), 1);
}

TEST(LossMeTest, UniformLogitsGiveLogK) {
  const std::vector<int> labels{0, 3, 4};
  EXPECT_NEAR(loss_me(Tensor(Matrix::Zero(3, 5)), labels).item(), std::log(5.0), 1e-12);
  EXPECT_NEAR(loss_me(Tensor(Matrix::Constant(1, 7, 2.5)), std::vector<int>{6}).item(), std::log(7.0), 1e-12);
}

TEST(LossMeTest, ConfidentMarginApproachesZero) {
  double prev = 1e9;
  for (double margin : {1.0, 5.0, 20.0, 50.0}) {
    Matrix z = Matrix::Zero(1, 5);
    z(0, 2) = margin;
    const double l = loss_me(Tensor(z), std::vector<int>{2}).item();
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_LT(prev, 1e-20);
}

TEST(LossMeTest, LabelOutOfRangeThrows) {
  EXPECT_THROW(loss_me(Tensor(Matrix::Zero(2, 5)), std::vector<int>{0, 5}), ValidationError);
  EXPECT_THROW(loss_me(Tensor(Matrix::Zero(2, 5)), std::vector<int>{0}), Error);
}

TEST(LossMcTest, Examples) {
  Matrix fa(2, 1);
  fa << 0.0, 2.0;
  EXPECT_DOUBLE_EQ(loss_mc(Tensor(fa), 1).item(), 0.5);
  std::mt19937_64 rng(1);
  const Matrix one = oracle::random_matrix(6, 4, rng);
  Matrix same(18, 4);
  same << one, one, one;
  EXPECT_EQ(loss_mc(Tensor(same), 6).item(), 0.0);
  EXPECT_EQ(loss_mc(Tensor(one), 6).item(), 0.0);
}

TEST(LossWcTest, Examples) {
  WeightCenterTable table(3, 4);
  Matrix w = Matrix::Constant(1, 4, 0.25);
  EXPECT_EQ(loss_wc(Tensor(w), std::vector<int>{1}, table).item(), 0.0);
  w(0, 0) += 0.1;
  EXPECT_NEAR(loss_wc(Tensor(w), std::vector<int>{1}, table).item(), 0.01, 1e-15);
  EXPECT_NEAR(loss_wc(Tensor(as_column(w)), std::vector<int>{1}, table).item(), 0.01, 1e-15);
}

TEST(LossWcTest, UnseenLabelThrows) {
  WeightCenterTable table(3, 4);
  const Tensor w(Matrix::Constant(2, 4, 0.25));
  EXPECT_THROW(loss_wc(w, std::vector<int>{0, 3}, table), ValidationError);
  EXPECT_THROW(loss_wc(w, std::vector<int>{-1, 0}, table), ValidationError);
}

TEST(LossWcTest, ZeroAtClassCenters) {
  std::mt19937_64 rng(2);
  WeightCenterTable table(3, 6);
  table.mutable_centers() = simplex_rows(3, 6, rng);
  const std::vector<int> labels{2, 0, 2, 1};
  Matrix w(4, 6);
  for (int i = 0; i < 4; ++i) w.row(i) = table.centers().row(labels[i]);
  EXPECT_EQ(loss_wc(Tensor(w), labels, table).item(), 0.0);
}

TEST(LossBTest, Examples) {
  Matrix w(2, 1);
  w << 1.0, 0.0;
  EXPECT_DOUBLE_EQ(loss_b(Tensor(w), 2).item(), 0.5);
  EXPECT_EQ(loss_b(Tensor(Matrix::Constant(12, 1, 0.25)), 4).item(), 0.0);
  // non-uniform samples whose mean is uniform
  Matrix pair(2, 2);
  pair << 0.8, 0.2, 0.2, 0.8;
  EXPECT_NEAR(loss_b(Tensor(as_column(pair)), 2).item(), 0.0, 1e-30);
}

TEST(LossBTest, GradientCheckAtTightTolerance) {
  std::mt19937_64 rng(3);
  ad::GradCheckOptions opts;
  opts.tolerance = 1e-6;
  for (int seed = 0; seed < 5; ++seed) {
    const Matrix w = as_column(simplex_rows(4, 6, rng));
    const auto r = ad::grad_check([](const Tensor& x) { return loss_b(x, 6); }, w, opts);
    EXPECT_TRUE(r.passed) << r.max_relative_error;
  }
}

TEST(LossTotalTest, Examples) {
  const LossTerms terms{Tensor::scalar(1.0), Tensor::scalar(0.2), Tensor::scalar(0.3), Tensor::scalar(0.4)};
  EXPECT_NEAR(loss_total(terms, LossWeights{}).item(), 1.54, 1e-15);
  EXPECT_EQ(loss_total(terms, LossWeights{0, 0, 0}).item(), 1.0);
  const LossTerms partial{Tensor::scalar(1.0), Tensor(), Tensor(), Tensor::scalar(0.4)};
  EXPECT_NEAR(loss_total(partial, LossWeights{}).item(), 1.04, 1e-15);
}

TEST(LossTotalTest, LinearInEachLambda) {
  const LossTerms terms{Tensor::scalar(0.7), Tensor::scalar(0.2), Tensor::scalar(0.3), Tensor::scalar(0.4)};
  const double base = loss_total(terms, LossWeights{0.5, 0.5, 0.5}).item();
  EXPECT_NEAR(loss_total(terms, LossWeights{1.5, 0.5, 0.5}).item() - base, 0.2, 1e-15);
  EXPECT_NEAR(loss_total(terms, LossWeights{0.5, 1.5, 0.5}).item() - base, 0.3, 1e-15);
  EXPECT_NEAR(loss_total(terms, LossWeights{0.5, 0.5, 1.5}).item() - base, 0.4, 1e-15);
}

TEST(LossTotalTest, NonFiniteTermIsNamed) {
  const LossTerms terms{Tensor::scalar(1.0), Tensor::scalar(std::nan("")), Tensor::scalar(0.3),
                        Tensor::scalar(0.4)};
  try {
    loss_total(terms, LossWeights{});
    FAIL();
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("L_MC"), std::string::npos) << e.what();
  }
}

TEST(LossTotalTest, ZeroLambdaRemovesCenterLossGradient) {
  std::mt19937_64 rng(4);
  const Matrix fa = oracle::random_matrix(12, 3, rng);
  const Matrix logits = oracle::random_matrix(2, 5, rng);
  const std::vector<int> labels{1, 4};
  auto grads = [&](const Matrix& fa_value) {
    Tensor f(fa_value, true);
    // logits depend on F_A so the two paths share a leaf
    const Tensor lg = ad::add(Tensor(logits), ad::scale(ad::matmul(Tensor(Matrix::Ones(2, 12) / 12.0),
                                                                   ad::matmul(f, Tensor(Matrix::Ones(3, 5)))),
                                                        0.0));
    const LossTerms t{loss_me(lg, labels), loss_mc(f, 6), Tensor(), Tensor()};
    ad::backward(loss_total(t, LossWeights{0.0, 1.0, 0.1}));
    return f.grad();
  };
  Matrix shifted = fa;
  shifted.topRows(6).array() += 3.0;  // moves the batch centers
  EXPECT_EQ(grads(fa), grads(shifted));
  EXPECT_TRUE(grads(fa).isZero(0.0));
}

TEST(LossOracleTest, RandomBatchesMatchLoops) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 5, k = 5, na = 2 + trial % 3, width = 3 * na, c1 = 4;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng() % k));

    const Matrix logits = oracle::random_matrix(n, k, rng) * 3.0;
    EXPECT_NEAR(loss_me(Tensor(logits), labels).item(), oracle::cross_entropy(logits, labels), 1e-12);

    const Matrix fa = oracle::random_matrix(n * width, c1, rng);
    std::vector<Matrix> samples;
    for (int i = 0; i < n; ++i) samples.push_back(fa.middleRows(i * width, width));
    EXPECT_NEAR(loss_mc(Tensor(fa), width).item(), oracle::mean_center(samples), 1e-12);

    WeightCenterTable table(k, width);
    table.mutable_centers() = simplex_rows(k, width, rng);
    const Matrix w = simplex_rows(n, width, rng);
    EXPECT_NEAR(loss_wc(Tensor(as_column(w)), labels, table).item(),
                oracle::weight_center(w, labels, table.centers()), 1e-12);
    EXPECT_NEAR(loss_b(Tensor(as_column(w)), width).item(), oracle::balance(w), 1e-12);
  }
}

TEST(LossGradTest, AllLossesPassGradientCheck) {
  std::mt19937_64 rng(6);
  for (int seed = 0; seed < 5; ++seed) {
    const std::vector<int> labels{0, 2, 2, 1};
    const auto me = ad::grad_check([&](const Tensor& x) { return loss_me(x, labels); },
                                   oracle::random_matrix(4, 3, rng));
    EXPECT_TRUE(me.passed) << me.max_relative_error;
    const auto mc = ad::grad_check([](const Tensor& x) { return loss_mc(x, 6); },
                                   oracle::random_matrix(24, 3, rng));
    EXPECT_TRUE(mc.passed) << mc.max_relative_error;
    WeightCenterTable table(3, 6);
    table.mutable_centers() = simplex_rows(3, 6, rng);
    const auto wc = ad::grad_check([&](const Tensor& x) { return loss_wc(x, labels, table); },
                                   as_column(simplex_rows(4, 6, rng)));
    EXPECT_TRUE(wc.passed) << wc.max_relative_error;
    const auto b = ad::grad_check([](const Tensor& x) { return loss_b(x, 6); },
                                  as_column(simplex_rows(4, 6, rng)));
    EXPECT_TRUE(b.passed) << b.max_relative_error;
  }
}

TEST(WeightCenterTableTest, StartsUniformAndEmaUpdates) {
  WeightCenterTable table(3, 2, 0.5);
  EXPECT_TRUE(table.centers().isApprox(Matrix::Constant(3, 2, 0.5)));
  Matrix w(2, 2);
  w << 1.0, 0.0, 0.8, 0.2;
  table.update(w, std::vector<int>{1, 1});
  // class 1 mean (0.9, 0.1); halfway from (0.5, 0.5)
  EXPECT_NEAR(table.centers()(1, 0), 0.7, 1e-15);
  EXPECT_NEAR(table.centers()(1, 1), 0.3, 1e-15);
  EXPECT_EQ(table.centers().row(0), table.centers().row(2));
  EXPECT_NEAR(table.centers().row(1).sum(), 1.0, 1e-15);
}

TEST(WeightCenterTableTest, BatchModeReplacesCenters) {
  WeightCenterTable table(2, 2, 0.5, WeightCenterTable::Mode::batch);
  Matrix w(1, 2);
  w << 0.9, 0.1;
  table.update(w, std::vector<int>{0});
  EXPECT_EQ(table.centers().row(0), w.row(0));
  EXPECT_TRUE(table.centers().row(1).isApprox(Matrix::Constant(1, 2, 0.5)));
}

TEST(WeightCenterTableTest, InvalidArguments) {
  EXPECT_THROW(WeightCenterTable(2, 2, 0.0), ConfigError);
  EXPECT_THROW(WeightCenterTable(2, 2, 1.5), ConfigError);
  WeightCenterTable table(2, 2);
  EXPECT_THROW(table.update(Matrix::Zero(1, 2), std::vector<int>{2}), ValidationError);
}

TEST(LossWeightsTest, JsonRoundTripAndValidation) {
  const LossWeights w{0.25, 0.0, 0.125};
  const nlohmann::json j = w;
  EXPECT_EQ(j.at("lambda1"), 0.25);
  const LossWeights back = j.get<LossWeights>();
  EXPECT_EQ(back.mean_center, 0.25);
  EXPECT_EQ(back.weight_center, 0.0);
  EXPECT_EQ(back.balance, 0.125);
  EXPECT_THROW((LossWeights{-1, 0, 0}.validate()), ConfigError);
}

}  // namespace
}  // namespace dere
