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
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "dere/error.hpp"
#include "dere/grad_check.hpp"
#include "dere/ops.hpp"
#include "dere/optim.hpp"
#include "dere/param_store.hpp"
#include "oracles.hpp"

namespace dere::ad {
namespace {

Matrix rand_m(Index r, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_matrix(r, c, rng);
}

TEST(GradCheckTest, SumIsExactToRoundOff) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = grad_check([](const Tensor& x) { return sum(x); }, rand_m(3, 4, seed));
    EXPECT_TRUE(r.passed);
    EXPECT_LE(r.max_relative_error, 1e-10);
    EXPECT_EQ(r.coordinates, 12);
  }
}

// Squares its input but claims the derivative is x instead of 2x.
Tensor bad_square_sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().squaredNorm();
  return Tensor::from_op("bad_square", std::move(out), {x}, [](Node& n) {
    n.parents[0]->grad += n.grad(0, 0) * n.parents[0]->value;
  });
}

TEST(GradCheckTest, WrongBackwardRuleFails) {
  const auto r = grad_check(bad_square_sum, rand_m(3, 4, 1));
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_relative_error, 0.5, 1e-6);
}

TEST(GradCheckTest, NonFiniteReportsCoordinate) {
  Matrix x = rand_m(2, 2, 3).cwiseAbs().array() + 0.1;
  x(1, 0) = 0.0;
  // At 0 the analytic derivative is infinite and the lower probe is NaN.
  auto f = [](const Tensor& t) {
    Matrix out(1, 1);
    out(0, 0) = t.value().array().sqrt().sum();
    return Tensor::from_op("sqrt_sum", std::move(out), {t}, [](Node& n) {
      n.parents[0]->grad.array() += 0.5 / n.parents[0]->value.array().sqrt();
    });
  };
  const auto r = grad_check(f, x);
  EXPECT_FALSE(r.passed);
  EXPECT_TRUE(r.non_finite);
  EXPECT_EQ(r.worst_index, 2);
}

TEST(GradCheckTest, ParameterCheckRestoresValues) {
  ParamStore ps;
  ps.add("w", rand_m(3, 2, 5));
  const Matrix before = ps.at("w").value();
  const Matrix x = rand_m(4, 3, 6);
  const auto r = grad_check_params(
      [&] { return sum(softmax_rows(matmul(Tensor(x), ps.at("w")))); }, ps);
  EXPECT_TRUE(r.passed) << r.max_relative_error;
  EXPECT_EQ(ps.at("w").value(), before);
  EXPECT_TRUE(ps.at("w").grad().isZero(0.0));
}

TEST(SgdTest, ZeroLearningRateLeavesParameters) {
  ParamStore ps;
  ps.add("p", rand_m(2, 2, 7));
  const Matrix before = ps.at("p").value();
  Sgd opt({0.0, 0.9});
  for (int i = 0; i < 3; ++i) {
    backward(sq_frobenius(ps.at("p")));
    opt.step(ps);
  }
  EXPECT_EQ(ps.at("p").value(), before);
}

TEST(SgdTest, SingleStepArithmetic) {
  ParamStore ps;
  ps.add("p", Matrix::Constant(1, 1, 1.0));
  ps.at("p").mutable_grad()(0, 0) = 0.5;
  Sgd opt({0.1, 0.0});
  opt.step(ps);
  EXPECT_DOUBLE_EQ(ps.at("p").value()(0, 0), 0.95);
  EXPECT_EQ(ps.at("p").grad()(0, 0), 0.0);
}

TEST(SgdTest, MomentumAccumulatesVelocity) {
  ParamStore ps;
  ps.add("p", Matrix::Constant(1, 1, 0.0));
  Sgd opt({1.0, 0.5});
  ps.at("p").mutable_grad()(0, 0) = 1.0;
  opt.step(ps);  // v = 1
  ps.at("p").mutable_grad()(0, 0) = 1.0;
  opt.step(ps);  // v = 1.5
  EXPECT_DOUBLE_EQ(ps.at("p").value()(0, 0), -2.5);
}

TEST(SgdTest, QuadraticBowlConverges) {
  ParamStore ps;
  ps.add("p", rand_m(3, 1, 8) * 5.0);
  Sgd opt({0.1, 0.0});
  int steps = 0;
  while (ps.at("p").value().norm() >= 1e-3 && steps < 200) {
    backward(sq_frobenius(ps.at("p")));
    opt.step(ps);
    ++steps;
  }
  // gradient 2p at lr 0.1 contracts by 0.8 per step
  EXPECT_LT(ps.at("p").value().norm(), 1e-3);
  EXPECT_LE(steps, 200);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  ParamStore ps;
  Matrix p0(1, 3);
  p0 << 1.0, -2.0, 0.5;
  ps.add("p", p0);
  ps.at("p").mutable_grad() << 0.3, -7.0, 1e-3;
  Adam opt({.learning_rate = 0.1, .epsilon = 0.0});
  opt.step(ps);
  // bias-corrected moments give a step of lr * sign(g)
  Matrix expect(1, 3);
  expect << 0.9, -1.9, 0.4;
  EXPECT_TRUE(ps.at("p").value().isApprox(expect, 1e-14));
  EXPECT_TRUE(ps.at("p").grad().isZero(0.0));
}

TEST(AdamTest, QuadraticBowlConverges) {
  ParamStore ps;
  ps.add("p", rand_m(3, 1, 9) * 5.0);
  Adam opt({.learning_rate = 0.05});
  for (int i = 0; i < 2000; ++i) {
    backward(sq_frobenius(ps.at("p")));
    opt.step(ps);
  }
  EXPECT_LT(ps.at("p").value().norm(), 1e-2);
}

TEST(AdamTest, NonFiniteGradLeavesParameters) {
  ParamStore ps;
  ps.add("a", Matrix::Ones(1, 1));
  ps.add("b", Matrix::Ones(1, 1));
  ps.at("a").mutable_grad()(0, 0) = 1.0;
  ps.at("b").mutable_grad()(0, 0) = std::numeric_limits<double>::infinity();
  Adam opt;
  EXPECT_THROW(opt.step(ps), InvariantError);
  EXPECT_EQ(ps.at("a").value()(0, 0), 1.0);
}

TEST(SgdTest, NonFiniteGradNamesParameter) {
  ParamStore ps;
  ps.add("good", Matrix::Zero(1, 1));
  ps.add("bad", Matrix::Zero(1, 1));
  ps.at("bad").mutable_grad()(0, 0) = std::nan("");
  Sgd opt;
  try {
    opt.step(ps);
    FAIL();
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
}

TEST(ParamStoreTest, DuplicateNameRejected) {
  ParamStore ps;
  ps.add("a", Matrix::Zero(1, 1));
  EXPECT_THROW(ps.add("a", Matrix::Zero(1, 1)), ConfigError);
  EXPECT_THROW(ps.at("missing"), ConfigError);
}

TEST(ParamStoreTest, CheckpointRoundTripIsBitExact) {
  ParamStore ps;
  ps.add("a", rand_m(3, 5, 9) * 1e-7);
  ps.add("b", rand_m(1, 4, 10) * 1e9);
  ps.at("a").mutable_value()(0, 0) = 0.1 + 0.2;  // not representable in short decimal
  const auto path = std::filesystem::temp_directory_path() / "dere_ckpt_test.json";
  save_checkpoint(path, ps, {{"note", "x"}});
  ParamStore other = ps.clone();
  for (auto& [name, t] : other) t.mutable_value().setZero();
  const auto meta = load_checkpoint(path, other);
  EXPECT_EQ(meta.at("note"), "x");
  EXPECT_EQ(other.fingerprint(), ps.fingerprint());
  std::filesystem::remove(path);
}

TEST(ParamStoreTest, LoadRejectsShapeMismatch) {
  ParamStore ps;
  ps.add("a", Matrix::Zero(2, 2));
  ParamStore wrong;
  wrong.add("a", Matrix::Zero(2, 3));
  EXPECT_THROW(ps.load_json(wrong.to_json()), ValidationError);
  ParamStore extra = ps.clone();
  extra.add("b", Matrix::Zero(1, 1));
  EXPECT_THROW(ps.load_json(extra.to_json()), ValidationError);
  EXPECT_THROW(extra.load_json(ps.to_json()), ValidationError);
}

TEST(ParamStoreTest, CloneIsIndependent) {
  ParamStore ps;
  ps.add("a", Matrix::Ones(2, 2));
  ParamStore c = ps.clone();
  c.at("a").mutable_value()(0, 0) = 5.0;
  EXPECT_EQ(ps.at("a").value()(0, 0), 1.0);
  EXPECT_NE(ps.fingerprint(), c.fingerprint());
}

}  // namespace
}  // namespace dere::ad
