// core/src/dsp.cpp

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

#include "nvl/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "fftw_lock.hpp"
#include "nvl/util.hpp"

namespace nvl {

Waveform::Waveform(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {
  if (rate != kSampleRate)
    throw std::invalid_argument("waveform sample rate must be " + std::to_string(kSampleRate) + " Hz, got " +
                                std::to_string(rate));
  for (double v : samples)
    if (!std::isfinite(v)) throw std::invalid_argument("waveform contains a non-finite sample");
}

Spectrogram::Spectrogram(std::size_t frames, std::size_t bins, std::vector<double> values)
    : frames_(frames), bins_(bins), values_(std::move(values)) {
  if (bins_ != kMelBins)
    throw ShapeError("spectrogram must have " + std::to_string(kMelBins) + " bins, got " + std::to_string(bins_));
  if (values_.size() != frames_ * bins_)
    throw ShapeError("spectrogram of " + std::to_string(frames_) + "x" + std::to_string(bins_) + " cannot hold " +
                     std::to_string(values_.size()) + " values");
  for (double v : values_)
    if (!std::isfinite(v)) throw std::invalid_argument("spectrogram contains a non-finite value");
}

Spectrogram Spectrogram::slice(std::size_t begin, std::size_t count) const {
  if (count == 0 || begin + count > frames_)
    throw ShapeError("spectrogram slice [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") outside " + std::to_string(frames_) + " frames");
  std::vector<double> v(values_.begin() + begin * bins_, values_.begin() + (begin + count) * bins_);
  return Spectrogram(count, bins_, std::move(v));
}

Tensor Spectrogram::to_tensor(bool requires_grad) const {
  return Tensor::from_vector({frames_, bins_}, values_, requires_grad);
}

Spectrogram Spectrogram::from_tensor(const Tensor& t) {
  if (t.ndim() != 2) throw ShapeError("spectrogram from tensor of shape " + to_string(t.shape()));
  return Spectrogram(t.dim(0), t.dim(1), std::vector<double>(t.data().begin(), t.data().end()));
}

void ChannelStats::validate() const {
  if (mu.size() != kMelBins || sigma.size() != kMelBins)
    throw ShapeError("channel stats must have " + std::to_string(kMelBins) + " bins");
  for (double s : sigma)
    if (!(s > 0)) throw std::invalid_argument("channel stats: sigma must be positive");
}

Mask::Mask(Spectrogram values) : values_(std::move(values)) {
  for (double v : values_.values())
    if (v < 0.0 || v > 1.0) throw std::invalid_argument("mask value " + std::to_string(v) + " outside [0,1]");
}

// ---------------------------------------------------------------------------
// Front-end

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

const MelFilterbank& mel_filterbank() {
  static const MelFilterbank bank = [] {
    MelFilterbank fb;
    const std::size_t num_fft_bins = kFftSize / 2 + 1;
    const double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(kSampleRate / 2.0);
    std::vector<double> edges(kMelBins + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
      edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (kMelBins + 1));
    for (std::size_t m = 0; m < kMelBins; ++m) {
      const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
      fb.center_hz.push_back(center);
      std::vector<double> w(num_fft_bins, 0.0);
      for (std::size_t b = 0; b < num_fft_bins; ++b) {
        const double f = static_cast<double>(b) * kSampleRate / kFftSize;
        if (f > left && f <= center) w[b] = (f - left) / (center - left);
        else if (f > center && f < right) w[b] = (right - f) / (right - center);
      }
      fb.weights.push_back(std::move(w));
    }
    return fb;
  }();
  return bank;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kWindowLength);
    for (std::size_t n = 0; n < kWindowLength; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / kWindowLength);
    return w;
  }();
  return window;
}

std::size_t frame_count(std::size_t num_samples) {
  if (num_samples < kWindowLength) return 0;
  return 1 + (num_samples - kWindowLength) / kHopLength;
}

namespace {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

// One shared r2c plan; fftw_execute_dft_r2c with fresh fftw_malloc'd buffers
// is safe to call concurrently.  Planning itself is not, hence the mutex.
fftw_plan r2c_plan() {
  static std::once_flag once;
  static fftw_plan plan;
  std::call_once(once, [] {
    std::lock_guard<std::mutex> lock(internal::fftw_planner_mutex());
    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(kFftSize));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(kFftSize / 2 + 1));
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in.get(), out.get(), FFTW_ESTIMATE);
  });
  return plan;
}

}  // namespace

Spectrogram logmel(const Waveform& w) {
  if (w.size() < kWindowLength)
    throw std::invalid_argument("logmel: waveform has " + std::to_string(w.size()) +
                                " samples, need at least " + std::to_string(kWindowLength));
  const std::size_t frames = frame_count(w.size());
  const std::size_t num_fft_bins = kFftSize / 2 + 1;
  const auto& window = hann_window();
  const auto& bank = mel_filterbank();

  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(kFftSize));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(num_fft_bins));
  std::vector<double> magnitude(num_fft_bins);
  std::vector<double> values(frames * kMelBins);
  const fftw_plan plan = r2c_plan();

  for (std::size_t t = 0; t < frames; ++t) {
    const double* frame = w.samples.data() + t * kHopLength;
    std::fill_n(in.get(), kFftSize, 0.0);
    for (std::size_t n = 0; n < kWindowLength; ++n) in.get()[n] = frame[n] * window[n];
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (std::size_t b = 0; b < num_fft_bins; ++b) magnitude[b] = std::hypot(out.get()[b][0], out.get()[b][1]);
    for (std::size_t m = 0; m < kMelBins; ++m) {
      double e = 0.0;
      const auto& wt = bank.weights[m];
      for (std::size_t b = 0; b < num_fft_bins; ++b) e += wt[b] * magnitude[b];
      values[t * kMelBins + m] = std::log(std::max(e, kLogFloor));
    }
  }
  return Spectrogram(frames, kMelBins, std::move(values));
}

// ---------------------------------------------------------------------------
// Normalizations

namespace {

double denominator(double sigma, const NormOptions& opts) {
  if (opts.sigma_power != 1 && opts.sigma_power != 2)
    throw std::invalid_argument("sigma_power must be 1 or 2, got " + std::to_string(opts.sigma_power));
  const double d = sigma + opts.epsilon;
  return opts.sigma_power == 1 ? d : d * d;
}

}  // namespace

Spectrogram channel_normalize(const Spectrogram& s, const ChannelStats& stats, const NormOptions& opts) {
  stats.validate();
  Spectrogram out = s;
  for (std::size_t k = 0; k < s.bins(); ++k) {
    const double d = denominator(stats.sigma[k], opts);
    for (std::size_t t = 0; t < s.frames(); ++t) out(t, k) = (s(t, k) - stats.mu[k]) / d;
  }
  return out;
}

Spectrogram channel_inverse(const Spectrogram& s, const ChannelStats& stats, const NormOptions& opts) {
  stats.validate();
  Spectrogram out = s;
  for (std::size_t k = 0; k < s.bins(); ++k) {
    const double d = denominator(stats.sigma[k], opts);
    for (std::size_t t = 0; t < s.frames(); ++t) out(t, k) = s(t, k) * d + stats.mu[k];
  }
  return out;
}

Spectrogram instance_normalize(const Spectrogram& s, const NormOptions& opts) {
  return Spectrogram::from_tensor(instance_normalize(s.to_tensor(), opts));
}

Spectrogram mvn(const Spectrogram& s, const NormOptions& opts) { return instance_normalize(s, opts); }

Spectrogram apply_mask(const Spectrogram& x, const Mask& m) {
  const Spectrogram& mv = m.values();
  if (mv.frames() != x.frames() || mv.bins() != x.bins())
    throw ShapeError("apply_mask: mask " + std::to_string(mv.frames()) + "x" + std::to_string(mv.bins()) +
                     " does not match input " + std::to_string(x.frames()) + "x" + std::to_string(x.bins()));
  Spectrogram out = x;
  auto o = out.values();
  auto mm = mv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mm[i];
  return out;
}

ChannelStats compute_channel_stats(std::span<const Spectrogram> corpus) {
  if (corpus.empty()) throw std::invalid_argument("compute_channel_stats: empty corpus");
  std::size_t total = 0;
  for (const auto& s : corpus) total += s.frames();
  if (total < 2)
    throw std::invalid_argument("compute_channel_stats: need at least 2 frames, got " + std::to_string(total));
  ChannelStats stats;
  stats.mu.assign(kMelBins, 0.0);
  stats.sigma.assign(kMelBins, 0.0);
  for (const auto& s : corpus)
    for (std::size_t t = 0; t < s.frames(); ++t)
      for (std::size_t k = 0; k < kMelBins; ++k) stats.mu[k] += s(t, k);
  for (double& m : stats.mu) m /= static_cast<double>(total);
  for (const auto& s : corpus)
    for (std::size_t t = 0; t < s.frames(); ++t)
      for (std::size_t k = 0; k < kMelBins; ++k) {
        const double d = s(t, k) - stats.mu[k];
        stats.sigma[k] += d * d;
      }
  for (double& v : stats.sigma) v = std::max(std::sqrt(v / static_cast<double>(total)), kNormEpsilon);
  return stats;
}

Tensor channel_inverse(const Tensor& s, const ChannelStats& stats, const NormOptions& opts) {
  stats.validate();
  if (s.ndim() != 2 || s.dim(1) != kMelBins)
    throw ShapeError("channel_inverse: expected T x " + std::to_string(kMelBins) + ", got " + to_string(s.shape()));
  std::vector<double> scale(kMelBins);
  for (std::size_t k = 0; k < kMelBins; ++k) scale[k] = denominator(stats.sigma[k], opts);
  const std::size_t frames = s.dim(0);
  std::vector<double> out(s.data().begin(), s.data().end());
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < kMelBins; ++k) out[t * kMelBins + k] = out[t * kMelBins + k] * scale[k] + stats.mu[k];
  return make_op("channel_inverse", s.shape(), std::move(out), {s}, [scale, frames](const GradContext& ctx) {
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < kMelBins; ++k) ctx.in_grads[0][t * kMelBins + k] += ctx.out_grad[t * kMelBins + k] * scale[k];
  });
}

Tensor instance_normalize(const Tensor& s, const NormOptions& opts) {
  if (s.ndim() != 2) throw ShapeError("instance_normalize: expected a 2-D tensor, got " + to_string(s.shape()));
  const std::size_t frames = s.dim(0), bins = s.dim(1);
  if (frames < 2) throw std::invalid_argument("instance_normalize: need at least 2 frames");
  const double n = static_cast<double>(frames);
  auto x = s.data();
  // Per bin: c = x - mean, sigma = population deviation, y = c / (sigma + eps)^p.
  std::vector<double> centered(x.begin(), x.end()), sigma(bins, 0.0), denom(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    double m = 0;
    for (std::size_t t = 0; t < frames; ++t) m += x[t * bins + k];
    m /= n;
    double v = 0;
    for (std::size_t t = 0; t < frames; ++t) {
      double& c = centered[t * bins + k];
      c -= m;
      v += c * c;
    }
    sigma[k] = std::sqrt(v / n);
    denom[k] = denominator(sigma[k], opts);
  }
  std::vector<double> out(frames * bins);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < bins; ++k) out[t * bins + k] = centered[t * bins + k] / denom[k];

  const int power = opts.sigma_power;
  const double eps = opts.epsilon;
  return make_op("instance_normalize", s.shape(), std::move(out), {s},
                 [frames, bins, n, power, eps, centered = std::move(centered), sigma = std::move(sigma),
                  denom = std::move(denom)](const GradContext& ctx) {
                   const auto& g = ctx.out_grad;
                   for (std::size_t k = 0; k < bins; ++k) {
                     const double d = denom[k];
                     double g_mean = 0, g_dot_c = 0;
                     for (std::size_t t = 0; t < frames; ++t) {
                       g_mean += g[t * bins + k];
                       g_dot_c += g[t * bins + k] * centered[t * bins + k];
                     }
                     g_mean /= n * d;
                     // dL/dsigma through the denominator; dsigma/dx_t = c_t / (n sigma).
                     const double dd_dsigma = power == 1 ? 1.0 : 2.0 * (sigma[k] + eps);
                     const double dl_dsigma = -g_dot_c / (d * d) * dd_dsigma;
                     const double coef = sigma[k] > 0 ? dl_dsigma / (n * sigma[k]) : 0.0;
                     for (std::size_t t = 0; t < frames; ++t)
                       ctx.in_grads[0][t * bins + k] +=
                           g[t * bins + k] / d - g_mean + coef * centered[t * bins + k];
                   }
                 });
}

Tensor apply_mask(const Tensor& x, const Tensor& m) {
  if (x.shape() != m.shape())
    throw ShapeError("apply_mask: mask " + to_string(m.shape()) + " does not match input " + to_string(x.shape()));
  return mul(x, m);
}

// ---------------------------------------------------------------------------
// Container

namespace {
constexpr std::string_view kSpecMagic = "NVLSPEC1";
}

void write_spectrogram(const std::filesystem::path& path, const Spectrogram& s) {
  ByteWriter w;
  w.bytes(kSpecMagic);
  w.u32(static_cast<std::uint32_t>(s.frames()));
  w.u32(static_cast<std::uint32_t>(s.bins()));
  for (double v : s.values()) w.f64(v);
  write_file(path, w.buffer());
}

Spectrogram read_spectrogram(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  ByteReader r(data);
  if (r.bytes(kSpecMagic.size()) != kSpecMagic) throw IntegrityError(path.string() + ": not an NVLSPEC1 file");
  const std::size_t frames = r.u32(), bins = r.u32();
  if (r.remaining() != frames * bins * 8)
    throw IntegrityError(path.string() + ": payload size does not match header");
  std::vector<double> values(frames * bins);
  for (double& v : values) v = r.f64();
  return Spectrogram(frames, bins, std::move(values));
}

}  // namespace nvl
