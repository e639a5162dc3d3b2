// core/src/models.cpp

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

#include "nvl/models.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "nvl/util.hpp"

namespace nvl {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

double sigm(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Fused LSTM direction

Tensor lstm_sequence(const Tensor& x, const Tensor& w, const Tensor& u, const Tensor& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || u.ndim() != 2)
    throw ShapeError("lstm: x, w and u must be 2-D");
  const std::size_t T = x.dim(0), in = x.dim(1), H = u.dim(0), G = 4 * H;
  if (w.shape() != Shape{in, G} || u.shape() != Shape{H, G} || b.numel() != G)
    throw ShapeError("lstm: x " + to_string(x.shape()) + ", w " + to_string(w.shape()) + ", u " +
                     to_string(u.shape()) + ", b " + to_string(b.shape()) + " are inconsistent");

  // gates holds post-activation [i f g o]; tanh_c the squashed cell state.
  auto gates = std::make_shared<RowMatrix>(T, G);
  auto cell = std::make_shared<RowMatrix>(T, H);
  auto tanh_c = std::make_shared<RowMatrix>(T, H);

  const ConstMap X(x.data().data(), T, in), W(w.data().data(), in, G), U(u.data().data(), H, G);
  const Eigen::Map<const Eigen::RowVectorXd> B(b.data().data(), G);
  *gates = X * W;
  gates->rowwise() += B;

  std::vector<double> out(T * H);
  MutMap Hs(out.data(), T, H);
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(H), c = Eigen::RowVectorXd::Zero(H);
  for (std::size_t t = 0; t < T; ++t) {
    auto z = gates->row(t);
    z.noalias() += h * U;
    for (std::size_t k = 0; k < H; ++k) {
      const double ig = sigm(z[k]), fg = sigm(z[H + k]), gg = std::tanh(z[2 * H + k]), og = sigm(z[3 * H + k]);
      z[k] = ig;
      z[H + k] = fg;
      z[2 * H + k] = gg;
      z[3 * H + k] = og;
      c[k] = fg * c[k] + ig * gg;
      const double tc = std::tanh(c[k]);
      (*tanh_c)(t, k) = tc;
      h[k] = og * tc;
    }
    cell->row(t) = c;
    Hs.row(t) = h;
  }

  return make_op("lstm", {T, H}, std::move(out), {x, w, u, b},
                 [gates, cell, tanh_c, T, in, H, G](const GradContext& ctx) {
                   const ConstMap dOut(ctx.out_grad.data(), T, H), Hs(ctx.out_value.data(), T, H);
                   const ConstMap X(ctx.in_values[0].data(), T, in), W(ctx.in_values[1].data(), in, G),
                       U(ctx.in_values[2].data(), H, G);
                   RowMatrix dZ(T, G);
                   Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(H), dc_next = Eigen::RowVectorXd::Zero(H);
                   for (std::size_t t = T; t-- > 0;) {
                     const auto gt = gates->row(t);
                     for (std::size_t k = 0; k < H; ++k) {
                       const double ig = gt[k], fg = gt[H + k], gg = gt[2 * H + k], og = gt[3 * H + k];
                       const double tc = (*tanh_c)(t, k);
                       const double dh = dOut(t, k) + dh_next[k];
                       const double dc = dh * og * (1 - tc * tc) + dc_next[k];
                       const double c_prev = t > 0 ? (*cell)(t - 1, k) : 0.0;
                       dZ(t, k) = dc * gg * ig * (1 - ig);
                       dZ(t, H + k) = dc * c_prev * fg * (1 - fg);
                       dZ(t, 2 * H + k) = dc * ig * (1 - gg * gg);
                       dZ(t, 3 * H + k) = dh * tc * og * (1 - og);
                       dc_next[k] = dc * fg;
                     }
                     dh_next.noalias() = dZ.row(t) * U.transpose();
                   }
                   if (!ctx.in_grads[0].empty()) MutMap(ctx.in_grads[0].data(), T, in).noalias() += dZ * W.transpose();
                   if (!ctx.in_grads[1].empty()) MutMap(ctx.in_grads[1].data(), in, G).noalias() += X.transpose() * dZ;
                   if (!ctx.in_grads[2].empty() && T > 1)
                     MutMap(ctx.in_grads[2].data(), H, G).noalias() +=
                         Hs.topRows(T - 1).transpose() * dZ.bottomRows(T - 1);
                   if (!ctx.in_grads[3].empty())
                     Eigen::Map<Eigen::RowVectorXd>(ctx.in_grads[3].data(), G) += dZ.colwise().sum();
                 });
}

// ---------------------------------------------------------------------------
// Initialisation

namespace {
// Layers feeding a ReLU get the usual sqrt(2) gain.
const double kReluGain = std::sqrt(2.0);
}  // namespace

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng, double gain) {
  const double a = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = u(rng);
  return Tensor::from_vector({fan_in, fan_out}, std::move(v), true);
}

Tensor orthogonal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  std::vector<double> v(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) v[i * n + j] = q(i, j);
  return Tensor::from_vector({n, n}, std::move(v), true);
}

std::uint64_t parameter_checksum(const std::vector<Parameter>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    for (char ch : p.path) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
    for (double v : p.value.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char ch : bytes) h = (h ^ ch) * 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

std::vector<Parameter> shadow_all(const std::vector<Parameter>& params) {
  std::vector<Parameter> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.path, p.value.shadow()});
  return out;
}

void save_all(const std::vector<Parameter>& params, Checkpoint& ck) {
  for (const auto& p : params) ck.put(p.path, p.value);
}

void load_all(std::vector<Parameter>& params, const Checkpoint& ck) {
  for (auto& p : params) {
    Tensor t = ck.tensor(p.path, p.value.shape());
    t.set_requires_grad(true);
    p.value = t;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Enhancer

void EnhancerConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("enhancer.layers must be >= 1");
  if (hidden < 1) throw std::invalid_argument("enhancer.hidden must be >= 1");
}

Enhancer::Enhancer(const EnhancerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(derive_seed(seed, "enhancer-init"));
  const std::size_t H = static_cast<std::size_t>(cfg_.hidden);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::size_t in = l == 0 ? kMelBins : 2 * H;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string base = "enhancer/blstm" + std::to_string(l) + "/" + dir + "/";
      params_.push_back({base + "W", xavier_uniform(in, 4 * H, rng)});
      // One orthogonal block per gate.
      std::vector<double> u(H * 4 * H);
      for (std::size_t g = 0; g < 4; ++g) {
        const Tensor q = orthogonal(H, rng);
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < H; ++j) u[i * 4 * H + g * H + j] = q.at(i, j);
      }
      params_.push_back({base + "U", Tensor::from_vector({H, 4 * H}, std::move(u), true)});
      std::vector<double> bias(4 * H, 0.0);
      std::fill(bias.begin() + static_cast<std::ptrdiff_t>(H), bias.begin() + static_cast<std::ptrdiff_t>(2 * H), 1.0);
      params_.push_back({base + "b", Tensor::from_vector({4 * H}, std::move(bias), true)});
    }
  }
  params_.push_back({"enhancer/out/W", xavier_uniform(2 * H, kMelBins, rng)});
  params_.push_back({"enhancer/out/b", Tensor::zeros({kMelBins}, true)});
}

Tensor Enhancer::mask(const Tensor& x_norm) const {
  if (x_norm.ndim() != 2 || x_norm.dim(1) != kMelBins)
    throw ShapeError("enhancer: expected T×" + std::to_string(kMelBins) + " input, got " + to_string(x_norm.shape()));
  Tensor h = x_norm;
  std::size_t k = 0;
  for (int l = 0; l < cfg_.layers; ++l, k += 6) {
    Tensor fwd = lstm_sequence(h, param(k), param(k + 1), param(k + 2));
    Tensor bwd = reverse_rows(lstm_sequence(reverse_rows(h), param(k + 3), param(k + 4), param(k + 5)));
    h = concat_cols({fwd, bwd});
  }
  return sigmoid(affine(h, param(k), param(k + 1)));
}

std::pair<Mask, Spectrogram> Enhancer::enhance(const Spectrogram& x_norm) const {
  NoGradGuard guard;
  Mask m(Spectrogram::from_tensor(mask(x_norm.to_tensor())));
  Spectrogram s = apply_mask(x_norm, m);
  return {std::move(m), std::move(s)};
}

Enhancer Enhancer::shadow() const {
  Enhancer e;
  e.cfg_ = cfg_;
  e.params_ = shadow_all(params_);
  return e;
}

void Enhancer::set_trainable(bool on) {
  for (auto& p : params_) p.value.set_requires_grad(on);
}

void Enhancer::save(Checkpoint& ck) const {
  ck.put("enhancer/arch", {2}, {static_cast<double>(cfg_.layers), static_cast<double>(cfg_.hidden)});
  save_all(params_, ck);
}

Enhancer Enhancer::load(const Checkpoint& ck) {
  const auto& arch = ck.get("enhancer/arch").values;
  if (arch.size() != 2) throw IntegrityError("checkpoint: malformed enhancer/arch");
  EnhancerConfig cfg;
  cfg.layers = static_cast<int>(arch[0]);
  cfg.hidden = static_cast<int>(arch[1]);
  Enhancer e(cfg, 0);
  load_all(e.params_, ck);
  return e;
}

Tensor enhancement_chain(const Enhancer& enhancer, const Tensor& x_norm, const ChannelStats& clean_stats,
                         const NormOptions& norm) {
  const Tensor enhanced = apply_mask(x_norm, enhancer.mask(x_norm));
  return instance_normalize(channel_inverse(enhanced, clean_stats, norm), norm);
}

// ---------------------------------------------------------------------------
// Embedder

void EmbedderConfig::validate() const {
  if (tdnn_width < 1 || pool_width < 1 || embedding_dim < 1 || fc2_dim < 1)
    throw std::invalid_argument("embedder widths must be >= 1");
  if (num_speakers < 2) throw std::invalid_argument("embedder.num_speakers must be >= 2");
}

const std::vector<std::vector<int>>& Embedder::contexts() {
  static const std::vector<std::vector<int>> ctx{{-2, -1, 0, 1, 2}, {-2, 0, 2}, {-3, 0, 3}, {0}, {0}};
  return ctx;
}

std::size_t Embedder::receptive_field() {
  std::size_t r = 1;
  for (const auto& c : contexts()) r += static_cast<std::size_t>(c.back() - c.front());
  return r;
}

Embedder::Embedder(const EmbedderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(derive_seed(seed, "embedder-init"));
  std::size_t in = kMelBins;
  const auto& ctx = contexts();
  for (std::size_t l = 0; l < ctx.size(); ++l) {
    const std::size_t out = static_cast<std::size_t>(l + 1 == ctx.size() ? cfg_.pool_width : cfg_.tdnn_width);
    const std::string base = "embedder/tdnn" + std::to_string(l) + "/";
    params_.push_back({base + "W", xavier_uniform(in * ctx[l].size(), out, rng, kReluGain)});
    params_.push_back({base + "b", Tensor::zeros({out}, true)});
    in = out;
  }
  auto dense = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out, double gain) {
    params_.push_back({"embedder/" + name + "/W", xavier_uniform(fan_in, fan_out, rng, gain)});
    params_.push_back({"embedder/" + name + "/b", Tensor::zeros({fan_out}, true)});
  };
  const auto E = static_cast<std::size_t>(cfg_.embedding_dim), F = static_cast<std::size_t>(cfg_.fc2_dim);
  dense("fc1", in, E, kReluGain);
  dense("fc2", E, F, kReluGain);
  dense("classifier", F, static_cast<std::size_t>(cfg_.num_speakers), 1.0);
}

EmbedderOutput Embedder::forward(const Tensor& s) const {
  if (s.ndim() != 2 || s.dim(1) != kMelBins)
    throw ShapeError("embedder: expected T×" + std::to_string(kMelBins) + " input, got " + to_string(s.shape()));
  if (s.dim(0) < receptive_field())
    throw std::invalid_argument("embedder: input has " + std::to_string(s.dim(0)) + " frames; at least " +
                                std::to_string(receptive_field()) + " are required");
  EmbedderOutput out;
  Tensor h = s;
  const auto& ctx = contexts();
  std::size_t k = 0;
  for (std::size_t l = 0; l < ctx.size(); ++l, k += 2) {
    Tensor spliced = ctx[l].size() == 1 ? h : splice_rows(h, ctx[l]);
    h = relu(affine(spliced, params_[k].value, params_[k + 1].value));
    out.taps.activations.push_back(h);
  }
  const Tensor pooled = reshape(mean(h, {0}), {1, h.dim(1)});
  out.embedding = affine(pooled, params_[k].value, params_[k + 1].value);
  const Tensor act = relu(out.embedding);
  out.taps.activations.push_back(act);
  const Tensor hidden = relu(affine(act, params_[k + 2].value, params_[k + 3].value));
  out.logits = affine(hidden, params_[k + 4].value, params_[k + 5].value);
  return out;
}

Embedder Embedder::shadow() const {
  Embedder e;
  e.cfg_ = cfg_;
  e.params_ = shadow_all(params_);
  return e;
}

void Embedder::set_trainable(bool on) {
  for (auto& p : params_) p.value.set_requires_grad(on);
}

void Embedder::save(Checkpoint& ck) const {
  ck.put("embedder/arch", {5},
         {static_cast<double>(cfg_.tdnn_width), static_cast<double>(cfg_.pool_width),
          static_cast<double>(cfg_.embedding_dim), static_cast<double>(cfg_.fc2_dim),
          static_cast<double>(cfg_.num_speakers)});
  save_all(params_, ck);
}

Embedder Embedder::load(const Checkpoint& ck) {
  const auto& arch = ck.get("embedder/arch").values;
  if (arch.size() != 5) throw IntegrityError("checkpoint: malformed embedder/arch");
  EmbedderConfig cfg;
  cfg.tdnn_width = static_cast<int>(arch[0]);
  cfg.pool_width = static_cast<int>(arch[1]);
  cfg.embedding_dim = static_cast<int>(arch[2]);
  cfg.fc2_dim = static_cast<int>(arch[3]);
  cfg.num_speakers = static_cast<int>(arch[4]);
  Embedder e(cfg, 0);
  load_all(e.params_, ck);
  return e;
}

}  // namespace nvl
