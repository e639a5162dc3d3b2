// core/include/nvl/optim.hpp

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

#ifndef NVL_OPTIM_HPP_
#define NVL_OPTIM_HPP_

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvl/checkpoint.hpp"
#include "nvl/models.hpp"

namespace nvl {

/// Non-finite loss or gradient during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { sgd, adadelta };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(const std::string& s);

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.1;
  double rho = 0.95;
  double eps = 1e-6;
};

/// Adadelta running averages for one parameter.
struct AdadeltaSlot {
  std::vector<double> square_avg;
  std::vector<double> acc_delta;
};

/// p <- p - lr * g.
void sgd_step(std::span<double> p, std::span<const double> g, double lr);
/// Adadelta with lr scaling the delta.
void adadelta_step(std::span<double> p, std::span<const double> g, AdadeltaSlot& slot, double lr, double rho,
                   double eps);

/// Applies one update to every parameter that requires a gradient.  Missing
/// gradients count as zero.  Throws DivergenceError on non-finite gradients.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec);

  const OptimizerSpec& spec() const { return spec_; }
  double lr() const { return spec_.lr; }
  void set_lr(double lr);

  void step(std::vector<Parameter>& params);

  void save(Checkpoint& ck, const std::string& prefix) const;
  void load(const Checkpoint& ck, const std::string& prefix);

 private:
  OptimizerSpec spec_;
  std::map<std::string, AdadeltaSlot> slots_;
};

/// Epoch-level learning-rate control: halve when the relative decrease of
/// the epoch loss falls below `threshold`; stop after `max_streak` halvings
/// in a row.
class LrSchedule {
 public:
  enum class Action { keep, halve, stop };

  LrSchedule(double lr, double threshold = 0.01, int max_streak = 2);

  /// Feed one epoch-mean loss; returns what happened.
  Action observe(double epoch_loss);

  double lr() const { return lr_; }
  int halvings() const { return halvings_; }
  int streak() const { return streak_; }
  bool stopped() const { return stopped_; }
  /// (prev - cur) / prev of the last observation; empty on the first epoch.
  std::optional<double> last_ratio() const { return last_ratio_; }

 private:
  double lr_;
  double threshold_;
  int max_streak_;
  int halvings_ = 0;
  int streak_ = 0;
  bool stopped_ = false;
  std::optional<double> prev_;
  std::optional<double> last_ratio_;
};

std::string to_string(LrSchedule::Action a);

}  // namespace nvl

#endif  // NVL_OPTIM_HPP_
