// core/include/nvl/dsp.hpp

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

#ifndef NVL_DSP_HPP_
#define NVL_DSP_HPP_

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "nvl/tensor.hpp"

namespace nvl {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kMelBins = 30;
inline constexpr std::size_t kWindowLength = 400;  // 25 ms
inline constexpr std::size_t kHopLength = 160;     // 10 ms
inline constexpr std::size_t kFftSize = 512;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kNormEpsilon = 1e-8;

/// Mono audio at 16 kHz.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(std::vector<double> s, int rate = kSampleRate);
  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// T×K log-Mel matrix, row-major (one row per frame).
class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(std::size_t frames, std::size_t bins, std::vector<double> values);
  Spectrogram(std::size_t frames, std::size_t bins) : Spectrogram(frames, bins, std::vector<double>(frames * bins)) {}

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  double& operator()(std::size_t t, std::size_t k) { return values_[t * bins_ + k]; }
  double operator()(std::size_t t, std::size_t k) const { return values_[t * bins_ + k]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  /// Frames [begin, begin + count).
  Spectrogram slice(std::size_t begin, std::size_t count) const;
  Tensor to_tensor(bool requires_grad = false) const;
  static Spectrogram from_tensor(const Tensor& t);

  friend bool operator==(const Spectrogram&, const Spectrogram&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<double> values_;
};

/// Per-Mel-bin mean and standard deviation of a corpus.
struct ChannelStats {
  std::vector<double> mu;
  std::vector<double> sigma;

  void validate() const;
};

/// Multiplicative time-frequency gain, every value in [0,1].
class Mask {
 public:
  explicit Mask(Spectrogram values);
  const Spectrogram& values() const { return values_; }

 private:
  Spectrogram values_;
};

/// Denominator exponent for the normalizations: 1 divides by the standard
/// deviation, 2 divides by the variance.
struct NormOptions {
  int sigma_power = 1;
  double epsilon = kNormEpsilon;
};

/// Triangular Mel filterbank over the positive FFT bins, one row per filter.
struct MelFilterbank {
  std::vector<double> center_hz;
  std::vector<std::vector<double>> weights;  // [filter][fft bin]
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);
const MelFilterbank& mel_filterbank();
/// Periodic Hann window of kWindowLength samples.
const std::vector<double>& hann_window();
std::size_t frame_count(std::size_t num_samples);

Spectrogram logmel(const Waveform& w);

Spectrogram channel_normalize(const Spectrogram& s, const ChannelStats& stats, const NormOptions& opts = {});
Spectrogram channel_inverse(const Spectrogram& s, const ChannelStats& stats, const NormOptions& opts = {});
Spectrogram instance_normalize(const Spectrogram& s, const NormOptions& opts = {});
/// Mean and variance normalization for the embedder input; same contract as
/// instance_normalize.
Spectrogram mvn(const Spectrogram& s, const NormOptions& opts = {});
Spectrogram apply_mask(const Spectrogram& x, const Mask& m);
ChannelStats compute_channel_stats(std::span<const Spectrogram> corpus);

// Differentiable forms used inside the training graph.
Tensor channel_inverse(const Tensor& s, const ChannelStats& stats, const NormOptions& opts = {});
Tensor instance_normalize(const Tensor& s, const NormOptions& opts = {});
Tensor apply_mask(const Tensor& x, const Tensor& m);

/// "NVLSPEC1" container: magic, T and K as u32, then T·K float64, little-endian.
void write_spectrogram(const std::filesystem::path& path, const Spectrogram& s);
Spectrogram read_spectrogram(const std::filesystem::path& path);

}  // namespace nvl

#endif  // NVL_DSP_HPP_
