// tests/support/nvl_test.hpp

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

// Shared helpers for the test suites: a central finite-difference oracle
// and scratch directories.

#ifndef NVL_TEST_HPP_
#define NVL_TEST_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nvl/tensor.hpp"

namespace nvl::testing {

/// Worst per-tensor relative error ||analytic - numeric|| / max(||analytic||,
/// ||numeric||) of d loss / d leaf, numeric by central differences.  `loss`
/// must rebuild the graph from the current leaf values on every call.
inline double gradient_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& leaves,
                             double h = 1e-5) {
  std::vector<Tensor> ls = leaves;
  for (auto& l : ls) l.zero_grad();
  loss().backward();
  double worst = 0.0;
  for (auto& l : ls) {
    std::vector<double> analytic(l.numel(), 0.0);
    if (l.has_grad()) std::copy(l.grad().begin(), l.grad().end(), analytic.begin());
    auto d = l.mutable_data();
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double orig = d[i];
      double plus, minus;
      {
        NoGradGuard guard;
        d[i] = orig + h;
        plus = loss().item();
        d[i] = orig - h;
        minus = loss().item();
      }
      d[i] = orig;
      const double numeric = (plus - minus) / (2 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    worst = std::max(worst, std::sqrt(diff2) / scale);
  }
  return worst;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), requires_grad);
}

/// Fresh directory removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag = "nvl") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace nvl::testing

#endif  // NVL_TEST_HPP_
