// core/include/nvl/losses.hpp

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

#ifndef NVL_LOSSES_HPP_
#define NVL_LOSSES_HPP_

#include <map>
#include <string>

#include "nvl/dsp.hpp"
#include "nvl/models.hpp"
#include "nvl/tensor.hpp"

namespace nvl {

/// A differentiable total plus named scalar components for logging.
struct LossValue {
  Tensor total;
  std::map<std::string, double> components;
};

struct PerceptualOptions {
  /// Divide each layer distance by sqrt(number of elements in the tap).
  bool layer_normalize = false;
};

/// Sum over taps of the L2 distance between paired activations.  Both sides
/// keep their gradients.
Tensor perceptual_modified(const TapSet& a, const TapSet& b, const PerceptualOptions& opts = {});
/// Same distance, but the reference side is cut from the graph.
Tensor perceptual_original(const TapSet& enhanced, const TapSet& reference, const PerceptualOptions& opts = {});
/// The individual layer terms, in tap order.
std::vector<Tensor> perceptual_terms(const TapSet& a, const TapSet& b, const PerceptualOptions& opts = {});

/// -log softmax(logits)[label]; logits is {S} or {1,S}.
Tensor cross_entropy(const Tensor& logits, int label);

/// lambda·pcptl + (1-lambda)·ce.
Tensor combined(const Tensor& pcptl, const Tensor& ce, double lambda);
double combined(double pcptl, double ce, double lambda);

/// Frobenius distance between an estimate and its target.
Tensor euclidean_baseline(const Tensor& s_hat, const Tensor& s);
double euclidean_baseline(const Spectrogram& s_hat, const Spectrogram& s);

}  // namespace nvl

#endif  // NVL_LOSSES_HPP_
