// core/include/nvl/models.hpp

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

#ifndef NVL_MODELS_HPP_
#define NVL_MODELS_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "nvl/checkpoint.hpp"
#include "nvl/dsp.hpp"
#include "nvl/tensor.hpp"

namespace nvl {

/// A named trainable tensor.
struct Parameter {
  std::string path;
  Tensor value;
};

/// One LSTM direction over a whole sequence as a single fused node.
/// x: T×in, w: in×4H, u: H×4H, b: 4H.  Gate order is [i, f, g, o].
/// Returns T×H hidden states; the initial state is zero.
Tensor lstm_sequence(const Tensor& x, const Tensor& w, const Tensor& u, const Tensor& b);

struct EnhancerConfig {
  int layers = 3;
  int hidden = 128;  // per direction

  void validate() const;
};

/// Stacked BLSTM mask estimator followed by a linear layer and a sigmoid.
class Enhancer {
 public:
  Enhancer() = default;
  Enhancer(const EnhancerConfig& cfg, std::uint64_t seed);

  const EnhancerConfig& config() const { return cfg_; }
  /// x_norm: T×30 channel-normalized input.  Returns the T×30 mask.
  Tensor mask(const Tensor& x_norm) const;
  /// Mask and masked spectrogram, both in the normalized domain.
  std::pair<Mask, Spectrogram> enhance(const Spectrogram& x_norm) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  /// Same storage, private gradient buffers.
  Enhancer shadow() const;
  void set_trainable(bool on);

  void save(Checkpoint& ck) const;
  static Enhancer load(const Checkpoint& ck);

 private:
  const Tensor& param(std::size_t i) const { return params_[i].value; }

  EnhancerConfig cfg_;
  std::vector<Parameter> params_;  // per layer: fwd W,U,b, bwd W,U,b; then out W,b
};

struct EmbedderConfig {
  int tdnn_width = 64;
  int pool_width = 128;  // width of the last frame-level layer
  int embedding_dim = 128;
  int fc2_dim = 128;
  int num_speakers = 20;

  void validate() const;
};

/// Activations fed to the perceptual losses: five frame-level layers and the
/// (rectified) embedding layer.
struct TapSet {
  std::vector<Tensor> activations;
};

struct EmbedderOutput {
  Tensor embedding;  // 1×E, fc1 before its nonlinearity
  Tensor logits;     // 1×S
  TapSet taps;
};

/// Frame-splicing time-delay stack, average pooling over time, two
/// utterance-level layers and a speaker classifier.
class Embedder {
 public:
  Embedder() = default;
  Embedder(const EmbedderConfig& cfg, std::uint64_t seed);

  const EmbedderConfig& config() const { return cfg_; }
  /// s: T×30, already instance-normalized.
  EmbedderOutput forward(const Tensor& s) const;
  EmbedderOutput embed(const Spectrogram& s) const { return forward(s.to_tensor()); }

  static const std::vector<std::vector<int>>& contexts();
  /// Frames consumed by the time-delay stack for a single output frame.
  static std::size_t receptive_field();

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Embedder shadow() const;
  void set_trainable(bool on);

  void save(Checkpoint& ck) const;
  static Embedder load(const Checkpoint& ck);

 private:
  EmbedderConfig cfg_;
  std::vector<Parameter> params_;  // tdnn0..4 W,b; fc1, fc2, classifier W,b
};

/// Front half of the joint system for one utterance: mask the
/// channel-normalized input, undo the normalization with the clean-corpus
/// statistics, then instance-normalize for the embedder.
Tensor enhancement_chain(const Enhancer& enhancer, const Tensor& x_norm, const ChannelStats& clean_stats,
                         const NormOptions& norm = {});

/// Xavier-uniform fan_in×fan_out matrix, bound scaled by `gain`.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng, double gain = 1.0);
/// n×n orthogonal matrix (QR of a Gaussian draw, sign-corrected).
Tensor orthogonal(std::size_t n, std::mt19937_64& rng);

/// Stable digest of all parameter values (FNV-1a over the raw bytes).
std::uint64_t parameter_checksum(const std::vector<Parameter>& params);

}  // namespace nvl

#endif  // NVL_MODELS_HPP_
