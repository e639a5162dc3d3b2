// core/src/losses.cpp

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

#include "nvl/losses.hpp"

#include <algorithm>
#include <cmath>

namespace nvl {

std::vector<Tensor> perceptual_terms(const TapSet& a, const TapSet& b, const PerceptualOptions& opts) {
  if (a.activations.size() != b.activations.size())
    throw ShapeError("perceptual loss: tap sets have " + std::to_string(a.activations.size()) + " and " +
                     std::to_string(b.activations.size()) + " layers");
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < a.activations.size(); ++i) {
    const Tensor& x = a.activations[i];
    const Tensor& y = b.activations[i];
    if (x.shape() != y.shape())
      throw ShapeError("perceptual loss: layer " + std::to_string(i) + " shapes " + to_string(x.shape()) +
                       " and " + to_string(y.shape()) + " differ");
    Tensor d = l2norm(x - y);
    if (opts.layer_normalize) d = scale(d, 1.0 / std::sqrt(static_cast<double>(x.numel())));
    terms.push_back(d);
  }
  return terms;
}

namespace {

Tensor sum_terms(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ShapeError("perceptual loss: empty tap set");
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  return total;
}

}  // namespace

Tensor perceptual_modified(const TapSet& a, const TapSet& b, const PerceptualOptions& opts) {
  return sum_terms(perceptual_terms(a, b, opts));
}

Tensor perceptual_original(const TapSet& enhanced, const TapSet& reference, const PerceptualOptions& opts) {
  TapSet detached;
  for (const auto& t : reference.activations) detached.activations.push_back(t.detach());
  return sum_terms(perceptual_terms(enhanced, detached, opts));
}

Tensor cross_entropy(const Tensor& logits, int label) {
  const bool vector_like = logits.ndim() == 1 || (logits.ndim() == 2 && logits.dim(0) == 1);
  if (!vector_like) throw ShapeError("cross_entropy: logits must be {S} or {1,S}, got " + to_string(logits.shape()));
  const std::size_t S = logits.numel();
  if (label < 0 || static_cast<std::size_t>(label) >= S)
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(S) + ")");
  const auto z = logits.data();
  const double zmax = *std::max_element(z.begin(), z.end());
  double denom = 0;
  for (double v : z) denom += std::exp(v - zmax);
  const double lse = zmax + std::log(denom);
  const auto y = static_cast<std::size_t>(label);
  return make_op("cross_entropy", {}, {lse - z[y]}, {logits}, [lse, y](const GradContext& ctx) {
    const double g = ctx.out_grad[0];
    const auto zz = ctx.in_values[0];
    for (std::size_t k = 0; k < zz.size(); ++k)
      ctx.in_grads[0][k] += g * (std::exp(zz[k] - lse) - (k == y ? 1.0 : 0.0));
  });
}

namespace {
void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("combined loss: lambda must lie in [0, 1], got " + std::to_string(lambda));
}
}  // namespace

Tensor combined(const Tensor& pcptl, const Tensor& ce, double lambda) {
  check_lambda(lambda);
  return scale(pcptl, lambda) + scale(ce, 1.0 - lambda);
}

double combined(double pcptl, double ce, double lambda) {
  check_lambda(lambda);
  return lambda * pcptl + (1.0 - lambda) * ce;
}

Tensor euclidean_baseline(const Tensor& s_hat, const Tensor& s) {
  if (s_hat.shape() != s.shape())
    throw ShapeError("euclidean_baseline: shapes " + to_string(s_hat.shape()) + " and " + to_string(s.shape()) +
                     " differ");
  return l2norm(s - s_hat);
}

double euclidean_baseline(const Spectrogram& s_hat, const Spectrogram& s) {
  return euclidean_baseline(s_hat.to_tensor(), s.to_tensor()).item();
}

}  // namespace nvl
