// core/src/optim.cpp

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

#include "nvl/optim.hpp"

#include <cmath>

namespace nvl {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adadelta"; }

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adadelta") return OptimizerKind::adadelta;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected sgd or adadelta)");
}

void sgd_step(std::span<double> p, std::span<const double> g, double lr) {
  if (p.size() != g.size()) throw ShapeError("sgd_step: parameter and gradient sizes differ");
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

void adadelta_step(std::span<double> p, std::span<const double> g, AdadeltaSlot& slot, double lr, double rho,
                   double eps) {
  if (p.size() != g.size()) throw ShapeError("adadelta_step: parameter and gradient sizes differ");
  if (slot.square_avg.size() != p.size()) {
    slot.square_avg.assign(p.size(), 0.0);
    slot.acc_delta.assign(p.size(), 0.0);
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    double& v = slot.square_avg[i];
    double& u = slot.acc_delta[i];
    v = rho * v + (1 - rho) * g[i] * g[i];
    const double delta = std::sqrt(u + eps) / std::sqrt(v + eps) * g[i];
    u = rho * u + (1 - rho) * delta * delta;
    p[i] -= lr * delta;
  }
}

Optimizer::Optimizer(OptimizerSpec spec) : spec_(spec) { set_lr(spec.lr); }

void Optimizer::set_lr(double lr) {
  if (!(lr >= 0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  spec_.lr = lr;
}

void Optimizer::step(std::vector<Parameter>& params) {
  for (auto& p : params) {
    if (!p.value.requires_grad()) continue;
    const auto g = p.value.grad();
    for (double v : g)
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient in " + p.path);
    if (g.empty()) {
      // Zero gradient: SGD is a no-op, Adadelta still decays its averages.
      if (spec_.kind == OptimizerKind::sgd) continue;
      const std::vector<double> zeros(p.value.numel(), 0.0);
      adadelta_step(p.value.mutable_data(), zeros, slots_[p.path], spec_.lr, spec_.rho, spec_.eps);
      continue;
    }
    if (spec_.kind == OptimizerKind::sgd)
      sgd_step(p.value.mutable_data(), g, spec_.lr);
    else
      adadelta_step(p.value.mutable_data(), g, slots_[p.path], spec_.lr, spec_.rho, spec_.eps);
  }
}

void Optimizer::save(Checkpoint& ck, const std::string& prefix) const {
  ck.put(prefix + "/hyper", {4},
         {spec_.kind == OptimizerKind::sgd ? 0.0 : 1.0, spec_.lr, spec_.rho, spec_.eps});
  for (const auto& [path, slot] : slots_) {
    ck.put(prefix + "/" + path + "/square_avg", {slot.square_avg.size()}, slot.square_avg);
    ck.put(prefix + "/" + path + "/acc_delta", {slot.acc_delta.size()}, slot.acc_delta);
  }
}

void Optimizer::load(const Checkpoint& ck, const std::string& prefix) {
  const auto& h = ck.get(prefix + "/hyper").values;
  spec_.kind = h.at(0) == 0.0 ? OptimizerKind::sgd : OptimizerKind::adadelta;
  spec_.lr = h.at(1);
  spec_.rho = h.at(2);
  spec_.eps = h.at(3);
  slots_.clear();
  const std::string sq = "/square_avg";
  for (const auto& e : ck.entries()) {
    if (e.path.rfind(prefix + "/", 0) != 0 || e.path.size() <= sq.size() ||
        e.path.compare(e.path.size() - sq.size(), sq.size(), sq) != 0)
      continue;
    const std::string path = e.path.substr(prefix.size() + 1, e.path.size() - prefix.size() - 1 - sq.size());
    slots_[path].square_avg = e.values;
    slots_[path].acc_delta = ck.get(prefix + "/" + path + "/acc_delta").values;
  }
}

LrSchedule::LrSchedule(double lr, double threshold, int max_streak)
    : lr_(lr), threshold_(threshold), max_streak_(max_streak) {
  if (!(lr >= 0)) throw std::invalid_argument("learning rate must be >= 0");
  if (max_streak < 1) throw std::invalid_argument("max halvings in a row must be >= 1");
}

LrSchedule::Action LrSchedule::observe(double epoch_loss) {
  if (stopped_) return Action::stop;
  if (!std::isfinite(epoch_loss)) throw DivergenceError("non-finite epoch loss");
  Action action = Action::keep;
  if (prev_) {
    const double ratio = (*prev_ - epoch_loss) / *prev_;
    last_ratio_ = ratio;
    if (ratio < threshold_) {
      lr_ *= 0.5;
      ++halvings_;
      ++streak_;
      action = Action::halve;
      if (streak_ >= max_streak_) {
        stopped_ = true;
        action = Action::stop;
      }
    } else {
      streak_ = 0;
    }
  }
  prev_ = epoch_loss;
  return action;
}

std::string to_string(LrSchedule::Action a) {
  switch (a) {
    case LrSchedule::Action::keep: return "keep";
    case LrSchedule::Action::halve: return "halve";
    case LrSchedule::Action::stop: return "stop";
  }
  return "?";
}

}  // namespace nvl
