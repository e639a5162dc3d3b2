// tests/unit/test_models.cpp

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
#include <random>

#include "nvl/models.hpp"
#include "nvl_test.hpp"

namespace nvl {
namespace {

using testing::gradient_error;
using testing::random_tensor;

std::vector<Tensor> leaves(const std::vector<Parameter>& ps) {
  std::vector<Tensor> out;
  for (const auto& p : ps) out.push_back(p.value);
  return out;
}

EmbedderConfig tiny_embedder() { return {.tdnn_width = 4, .pool_width = 5, .embedding_dim = 4, .fc2_dim = 3, .num_speakers = 3}; }

double sig(double z) { return 1 / (1 + std::exp(-z)); }

// Scalar reference: gates laid out [input, forget, candidate, output].
std::vector<double> lstm_reference(const Tensor& x, const Tensor& w, const Tensor& u, const Tensor& b) {
  const std::size_t T = x.dim(0), in = x.dim(1), H = u.dim(0);
  std::vector<double> h(H, 0), c(H, 0), out;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> z(4 * H);
    for (std::size_t g = 0; g < 4 * H; ++g) {
      double s = b.data()[g];
      for (std::size_t i = 0; i < in; ++i) s += x.at(t, i) * w.at(i, g);
      for (std::size_t j = 0; j < H; ++j) s += h[j] * u.at(j, g);
      z[g] = s;
    }
    for (std::size_t k = 0; k < H; ++k) {
      c[k] = sig(z[H + k]) * c[k] + sig(z[k]) * std::tanh(z[2 * H + k]);
      h[k] = sig(z[3 * H + k]) * std::tanh(c[k]);
    }
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

TEST(Lstm, MatchesScalarReference) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({7, 4}, rng, -2, 2, false), w = random_tensor({4, 12}, rng, -1, 1, false);
  const Tensor u = random_tensor({3, 12}, rng, -1, 1, false), b = random_tensor({12}, rng, -1, 1, false);
  const Tensor y = lstm_sequence(x, w, u, b);
  ASSERT_EQ(y.shape(), (Shape{7, 3}));
  const auto ref = lstm_reference(x, w, u, b);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-14);
}

TEST(Lstm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({9, 4}, rng, -2, 2), w = random_tensor({4, 12}, rng), u = random_tensor({3, 12}, rng);
  Tensor b = random_tensor({12}, rng);
  const Tensor probe = random_tensor({9, 3}, rng, -1, 1, false);
  EXPECT_LT(gradient_error([&] { return sum(mul(lstm_sequence(x, w, u, b), probe)); }, {x, w, u, b}), 1e-6);
}

TEST(Lstm, ShapeErrors) {
  EXPECT_THROW(lstm_sequence(Tensor::zeros({3, 4}), Tensor::zeros({5, 8}), Tensor::zeros({2, 8}), Tensor::zeros({8})),
               ShapeError);
  EXPECT_THROW(lstm_sequence(Tensor::zeros({3, 4}), Tensor::zeros({4, 8}), Tensor::zeros({2, 8}), Tensor::zeros({7})),
               ShapeError);
}

TEST(Enhancer, MaskShapeAndRange) {
  const Enhancer e({.layers = 2, .hidden = 6}, 3);
  std::mt19937_64 rng(3);
  const Tensor m = e.mask(random_tensor({11, kMelBins}, rng, -3, 3, false));
  ASSERT_EQ(m.shape(), (Shape{11, kMelBins}));
  for (double v : m.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_THROW(e.mask(Tensor::zeros({5, 29})), ShapeError);
}

TEST(Enhancer, ZeroWeightsGiveHalfMask) {
  Enhancer e({.layers = 1, .hidden = 4}, 3);
  for (auto& p : e.parameters())
    for (double& v : p.value.mutable_data()) v = 0.0;
  std::mt19937_64 rng(4);
  const Tensor m = e.mask(random_tensor({5, kMelBins}, rng, -3, 3, false));
  for (double v : m.data()) EXPECT_EQ(v, 0.5);
}

TEST(Enhancer, EnhanceAppliesItsOwnMask) {
  const Enhancer e({.layers = 1, .hidden = 4}, 5);
  std::mt19937_64 rng(5);
  const Spectrogram x = Spectrogram::from_tensor(random_tensor({6, kMelBins}, rng, -2, 2, false));
  const auto [mask, y] = e.enhance(x);
  for (std::size_t i = 0; i < x.values().size(); ++i) EXPECT_EQ(y.values()[i], x.values()[i] * mask.values().values()[i]);
}

// Reversing time while swapping the two directions (and their output
// columns) must reverse the mask: each direction only sees one side.
TEST(Enhancer, BidirectionalTimeSymmetry) {
  const int H = 3;
  const Enhancer a({.layers = 1, .hidden = H}, 6);
  Enhancer b = Enhancer::load([&] {
    Checkpoint ck;
    a.save(ck);
    return ck;
  }());
  auto& pa = a.parameters();
  auto& pb = b.parameters();
  for (int i = 0; i < 3; ++i) {
    std::copy(pa[i].value.data().begin(), pa[i].value.data().end(), pb[i + 3].value.mutable_data().begin());
    std::copy(pa[i + 3].value.data().begin(), pa[i + 3].value.data().end(), pb[i].value.mutable_data().begin());
  }
  const auto wa = pa[6].value.data();
  auto wb = pb[6].value.mutable_data();
  for (int r = 0; r < 2 * H; ++r)
    for (std::size_t c = 0; c < kMelBins; ++c) wb[((r + H) % (2 * H)) * kMelBins + c] = wa[r * kMelBins + c];

  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({8, kMelBins}, rng, -2, 2, false);
  const Tensor ma = a.mask(x), mb = b.mask(reverse_rows(x));
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t k = 0; k < kMelBins; ++k) EXPECT_NEAR(mb.at(7 - t, k), ma.at(t, k), 1e-14);
}

TEST(Enhancer, GradientMatchesFiniteDifferences) {
  const Enhancer e({.layers = 2, .hidden = 3}, 8);
  std::mt19937_64 rng(8);
  Tensor x = random_tensor({5, kMelBins}, rng, -2, 2);
  const Tensor probe = random_tensor({5, kMelBins}, rng, -1, 1, false);
  auto ls = leaves(e.parameters());
  ls.push_back(x);
  EXPECT_LT(gradient_error([&] { return sum(mul(e.mask(x), probe)); }, ls), 1e-4);
}

TEST(Enhancer, ExtremeInputsStayFinite) {
  const Enhancer e({.layers = 2, .hidden = 4}, 9);
  std::vector<double> v(6 * kMelBins);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i % 2 ? 1e6 : -1e6;
  const Tensor x = Tensor::from_vector({6, kMelBins}, v, true);
  const Tensor m = e.mask(x);
  for (double y : m.data()) {
    EXPECT_TRUE(std::isfinite(y));
    EXPECT_GE(y, 0.0);
    EXPECT_LE(y, 1.0);
  }
  sum(m).backward();
  for (double g : x.grad()) EXPECT_TRUE(std::isfinite(g));
}

TEST(Enhancer, ConfigValidation) {
  EXPECT_THROW(Enhancer({.layers = 0, .hidden = 4}, 1), std::invalid_argument);
  EXPECT_THROW(Enhancer({.layers = 1, .hidden = 0}, 1), std::invalid_argument);
}

TEST(Embedder, SixTapsAndOutputShapes) {
  const Embedder e(tiny_embedder(), 1);
  std::mt19937_64 rng(1);
  const EmbedderOutput o = e.forward(random_tensor({20, kMelBins}, rng, -1, 1, false));
  ASSERT_EQ(o.taps.activations.size(), 6u);
  EXPECT_EQ(o.taps.activations[0].shape(), (Shape{16, 4}));
  EXPECT_EQ(o.taps.activations[1].shape(), (Shape{12, 4}));
  EXPECT_EQ(o.taps.activations[2].shape(), (Shape{6, 4}));
  EXPECT_EQ(o.taps.activations[4].shape(), (Shape{6, 5}));
  EXPECT_EQ(o.taps.activations[5].shape(), (Shape{1, 4}));
  EXPECT_EQ(o.embedding.shape(), (Shape{1, 4}));
  EXPECT_EQ(o.logits.shape(), (Shape{1, 3}));
  for (const auto& tap : o.taps.activations)
    for (double v : tap.data()) EXPECT_GE(v, 0.0);
  // The last tap is the activated embedding.
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(o.taps.activations[5].data()[i], std::max(0.0, o.embedding.data()[i]));
}

TEST(Embedder, ReceptiveFieldIsEnforced) {
  EXPECT_EQ(Embedder::receptive_field(), 15u);
  const Embedder e(tiny_embedder(), 1);
  EXPECT_NO_THROW(e.forward(Tensor::zeros({15, kMelBins})));
  EXPECT_THROW(e.forward(Tensor::zeros({14, kMelBins})), std::invalid_argument);
  EXPECT_THROW(e.forward(Tensor::zeros({20, 12})), ShapeError);
}

TEST(Embedder, GradientMatchesFiniteDifferences) {
  const Embedder e(tiny_embedder(), 2);
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({16, kMelBins}, rng, -2, 2);
  auto ls = leaves(e.parameters());
  ls.push_back(x);
  EXPECT_LT(gradient_error(
                [&] {
                  const EmbedderOutput o = e.forward(x);
                  Tensor loss = sum(square(o.logits)) + sum(o.embedding);
                  for (const auto& tap : o.taps.activations) loss = loss + scale(sum(tap), 0.1);
                  return loss;
                },
                ls),
            1e-4);
}

TEST(Embedder, ExtremeInputsStayFinite) {
  const Embedder e(tiny_embedder(), 3);
  const EmbedderOutput o = e.forward(Tensor::full({15, kMelBins}, 1e6));
  for (double v : o.logits.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Embedder, ConfigValidation) {
  auto cfg = tiny_embedder();
  cfg.num_speakers = 1;
  EXPECT_THROW(Embedder(cfg, 1), std::invalid_argument);
  cfg = tiny_embedder();
  cfg.tdnn_width = 0;
  EXPECT_THROW(Embedder(cfg, 1), std::invalid_argument);
}

TEST(Models, SeededInitIsDeterministic) {
  const Embedder a(tiny_embedder(), 4), b(tiny_embedder(), 4), c(tiny_embedder(), 5);
  EXPECT_EQ(parameter_checksum(a.parameters()), parameter_checksum(b.parameters()));
  EXPECT_NE(parameter_checksum(a.parameters()), parameter_checksum(c.parameters()));
}

TEST(Models, ChecksumSeesEveryBit) {
  Embedder a(tiny_embedder(), 4);
  const auto before = parameter_checksum(a.parameters());
  auto d = a.parameters().back().value.mutable_data();
  d[0] = std::nextafter(d[0], 10.0);
  EXPECT_NE(parameter_checksum(a.parameters()), before);
}

TEST(Models, ShadowSharesValues) {
  Embedder a(tiny_embedder(), 4);
  Embedder s = a.shadow();
  a.parameters()[0].value.mutable_data()[0] = 42;
  EXPECT_EQ(s.parameters()[0].value.data()[0], 42);
  s.set_trainable(false);
  EXPECT_FALSE(s.parameters()[0].value.requires_grad());
}

TEST(Init, XavierBoundsAndOrthogonality) {
  std::mt19937_64 rng(5);
  const Tensor w = xavier_uniform(30, 50, rng, 2.0);
  const double bound = 2.0 * std::sqrt(6.0 / 80.0);
  double mx = 0;
  for (double v : w.data()) mx = std::max(mx, std::abs(v));
  EXPECT_LE(mx, bound);
  EXPECT_GT(mx, 0.9 * bound);
  const Tensor q = orthogonal(7, rng);
  const Tensor qtq = matmul(transpose(q), q);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) EXPECT_NEAR(qtq.at(i, j), i == j ? 1.0 : 0.0, 1e-12);
}

}  // namespace
}  // namespace nvl
