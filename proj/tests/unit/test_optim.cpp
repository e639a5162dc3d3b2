// tests/unit/test_optim.cpp

// Copyright 2026  The nvl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "nvl/optim.hpp"
#include "nvl_test.hpp"

namespace nvl {
namespace {

std::vector<Parameter> one_param(std::vector<double> v) {
  const std::size_t n = v.size();
  return {{"w", Tensor::from_vector({n}, std::move(v), true)}};
}

void set_grad(Parameter& p, const std::vector<double>& g) {
  p.value.zero_grad();
  p.value.accumulate_grad(g);
}

TEST(Sgd, SingleStepExample) {
  auto ps = one_param({1.0});
  set_grad(ps[0], {2.0});
  Optimizer opt({.kind = OptimizerKind::sgd, .lr = 0.1});
  opt.step(ps);
  EXPECT_DOUBLE_EQ(ps[0].value.data()[0], 0.8);
}

TEST(Sgd, ZeroOrMissingGradientIsANoOp) {
  auto ps = one_param({1.0, -2.0});
  Optimizer opt({.kind = OptimizerKind::sgd, .lr = 0.5});
  opt.step(ps);  // no gradient accumulated
  set_grad(ps[0], {0.0, 0.0});
  opt.step(ps);
  EXPECT_EQ(ps[0].value.data()[0], 1.0);
  EXPECT_EQ(ps[0].value.data()[1], -2.0);
}

TEST(Sgd, FrozenParametersAreSkipped) {
  auto ps = one_param({3.0});
  set_grad(ps[0], {1.0});
  ps[0].value.set_requires_grad(false);
  Optimizer({.kind = OptimizerKind::sgd, .lr = 1.0}).step(ps);
  EXPECT_EQ(ps[0].value.data()[0], 3.0);
}

TEST(Adadelta, FirstStepClosedForm) {
  const double rho = 0.95, eps = 1e-6, lr = 0.3, g = 2.0;
  auto ps = one_param({1.0});
  set_grad(ps[0], {g});
  Optimizer opt({.kind = OptimizerKind::adadelta, .lr = lr, .rho = rho, .eps = eps});
  opt.step(ps);
  const double v = (1 - rho) * g * g;
  const double delta = std::sqrt(eps) / std::sqrt(v + eps) * g;
  EXPECT_NEAR(ps[0].value.data()[0], 1.0 - lr * delta, 1e-12);
}

TEST(Adadelta, SecondStepClosedForm) {
  const double rho = 0.95, eps = 1e-6;
  std::vector<double> p{0.5};
  AdadeltaSlot slot;
  adadelta_step(p, std::vector<double>{1.0}, slot, 1.0, rho, eps);
  adadelta_step(p, std::vector<double>{-3.0}, slot, 1.0, rho, eps);
  const double v1 = (1 - rho), d1 = std::sqrt(eps) / std::sqrt(v1 + eps);
  const double u1 = (1 - rho) * d1 * d1;
  const double v2 = rho * v1 + (1 - rho) * 9.0, d2 = std::sqrt(u1 + eps) / std::sqrt(v2 + eps) * -3.0;
  EXPECT_NEAR(p[0], 0.5 - d1 - d2, 1e-15);
}

TEST(Adadelta, ZeroGradientLeavesValuesButDecaysState) {
  auto ps = one_param({1.0});
  Optimizer opt({.kind = OptimizerKind::adadelta, .lr = 1.0});
  set_grad(ps[0], {1.0});
  opt.step(ps);
  const double after_one = ps[0].value.data()[0];
  ps[0].value.zero_grad();
  opt.step(ps);
  EXPECT_EQ(ps[0].value.data()[0], after_one);
  Checkpoint ck;
  opt.save(ck, "opt");
  EXPECT_NEAR(ck.get("opt/w/square_avg").values[0], 0.95 * 0.05, 1e-15);
}

TEST(Optimizer, NonFiniteGradientDiverges) {
  for (double bad : {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity()}) {
    auto ps = one_param({1.0, 2.0});
    set_grad(ps[0], {0.0, bad});
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::adadelta})
      EXPECT_THROW(Optimizer({.kind = kind, .lr = 0.1}).step(ps), DivergenceError);
  }
}

TEST(Optimizer, LearningRateValidation) {
  EXPECT_THROW(Optimizer({.kind = OptimizerKind::sgd, .lr = -1}), std::invalid_argument);
  Optimizer opt({});
  EXPECT_THROW(opt.set_lr(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  opt.set_lr(0.0);
  EXPECT_EQ(opt.lr(), 0.0);
  EXPECT_EQ(parse_optimizer_kind(to_string(OptimizerKind::adadelta)), OptimizerKind::adadelta);
  EXPECT_THROW(parse_optimizer_kind("adam"), std::invalid_argument);
}

TEST(Optimizer, StateSurvivesCheckpointExactly) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 1);
  auto a = one_param({0.1, 0.2, 0.3});
  Optimizer oa({.kind = OptimizerKind::adadelta, .lr = 0.3});
  for (int i = 0; i < 5; ++i) {
    set_grad(a[0], {g(rng), g(rng), g(rng)});
    oa.step(a);
  }
  Checkpoint ck;
  oa.save(ck, "optimizer");
  const Checkpoint back = Checkpoint::deserialize(ck.serialize());
  auto b = one_param({a[0].value.data()[0], a[0].value.data()[1], a[0].value.data()[2]});
  Optimizer ob({});
  ob.load(back, "optimizer");
  EXPECT_EQ(ob.spec().kind, OptimizerKind::adadelta);
  EXPECT_EQ(ob.lr(), 0.3);
  const std::vector<double> grad{g(rng), g(rng), g(rng)};
  set_grad(a[0], grad);
  set_grad(b[0], grad);
  oa.step(a);
  ob.step(b);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a[0].value.data()[i], b[0].value.data()[i]);
}

TEST(Schedule, HandSimulatedTrace) {
  LrSchedule s(1.0, 0.01, 2);
  EXPECT_EQ(s.observe(1.00), LrSchedule::Action::keep);
  EXPECT_FALSE(s.last_ratio());
  EXPECT_EQ(s.observe(0.995), LrSchedule::Action::halve);
  EXPECT_NEAR(*s.last_ratio(), 0.005, 1e-15);
  EXPECT_EQ(s.lr(), 0.5);
  EXPECT_EQ(s.observe(0.991), LrSchedule::Action::stop);
  EXPECT_EQ(s.lr(), 0.25);
  EXPECT_EQ(s.halvings(), 2);
  EXPECT_TRUE(s.stopped());
  EXPECT_EQ(s.observe(0.5), LrSchedule::Action::stop);
  EXPECT_EQ(s.halvings(), 2);
}

TEST(Schedule, GoodEpochResetsTheStreak) {
  LrSchedule s(0.2, 0.01, 2);
  const std::vector<double> losses{2.0, 1.0, 0.999, 0.5, 0.4999, 0.2, 0.1999};
  const std::vector<LrSchedule::Action> expect{LrSchedule::Action::keep, LrSchedule::Action::keep,
                                               LrSchedule::Action::halve, LrSchedule::Action::keep,
                                               LrSchedule::Action::halve, LrSchedule::Action::keep,
                                               LrSchedule::Action::halve};
  for (std::size_t i = 0; i < losses.size(); ++i) EXPECT_EQ(s.observe(losses[i]), expect[i]) << i;
  EXPECT_NEAR(s.lr(), 0.025, 1e-15);
  EXPECT_EQ(s.streak(), 1);
  EXPECT_FALSE(s.stopped());
}

TEST(ScheduleProperty, LrNeverIncreasesAndStreakIsBounded) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> step(-0.05, 0.1);
  for (int trial = 0; trial < 200; ++trial) {
    LrSchedule s(0.3, 0.01, 2);
    double loss = 10, lr = s.lr();
    int consecutive = 0;
    for (int epoch = 0; epoch < 60 && !s.stopped(); ++epoch) {
      loss *= 1 - step(rng);
      const auto a = s.observe(loss);
      EXPECT_LE(s.lr(), lr);
      consecutive = a == LrSchedule::Action::keep ? 0 : consecutive + 1;
      EXPECT_LE(consecutive, 2);
      EXPECT_EQ(s.lr(), 0.3 * std::pow(0.5, s.halvings()));
      lr = s.lr();
    }
  }
}

TEST(Schedule, NonFiniteLossDiverges) {
  LrSchedule s(0.1);
  s.observe(1.0);
  EXPECT_THROW(s.observe(std::numeric_limits<double>::quiet_NaN()), DivergenceError);
  EXPECT_THROW(LrSchedule(0.1, 0.01, 0), std::invalid_argument);
}

}  // namespace
}  // namespace nvl
