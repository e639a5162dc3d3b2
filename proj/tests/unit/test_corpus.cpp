// tests/unit/test_corpus.cpp

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

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <set>

#include "nvl/corpus.hpp"
#include "nvl/util.hpp"
#include "nvl/wav.hpp"
#include "nvl_test.hpp"

namespace nvl {
namespace {

using testing::ScratchDir;

CorpusConfig small_config(std::uint64_t seed = 7) {
  CorpusConfig c;
  c.seed = seed;
  c.train_speakers = 3;
  c.test_speakers = 2;
  c.train_utts_per_speaker = 10;
  c.test_utts_per_speaker = 3;
  c.min_duration_s = 2.6;
  c.max_duration_s = 2.8;
  return c;
}

double mean_square(const std::vector<double>& x) {
  long double s = 0;
  for (double v : x) s += static_cast<long double>(v) * v;
  return static_cast<double>(s / x.size());
}

// Averaged periodogram by direct DFT; returns power per bin for a 1024-point frame.
std::vector<double> periodogram(const std::vector<double>& x, std::size_t frames = 6) {
  constexpr std::size_t n = 1024;
  std::vector<double> p(n / 2 + 1, 0.0);
  std::vector<std::complex<double>> tw(n);
  for (std::size_t i = 0; i < n; ++i) tw[i] = std::polar(1.0, -2 * std::numbers::pi * i / n);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      std::complex<double> acc = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / n);
        acc += x[f * n + i] * w * tw[(k * i) % n];
      }
      p[k] += std::norm(acc);
    }
  }
  return p;
}

double band_power(const std::vector<double>& p, double lo_hz, double hi_hz) {
  double s = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double f = k * 16000.0 / 1024.0;
    if (f >= lo_hz && f < hi_hz) s += p[k];
  }
  return s;
}

TEST(Speaker, GenerationIsDeterministicAndValid) {
  for (int id = 0; id < 40; ++id) {
    const SpeakerModel a = SpeakerModel::generate(id, 3), b = SpeakerModel::generate(id, 3);
    EXPECT_NO_THROW(a.validate());
    EXPECT_EQ(a.seed, b.seed);
    ASSERT_EQ(a.envelope.size(), 5u);
    EXPECT_EQ(a.strongest().gain, 1.0);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(a.envelope[k].center_hz, b.envelope[k].center_hz);
    const std::size_t dom = static_cast<std::size_t>(&a.strongest() - a.envelope.data());
    for (const auto& v : a.vowels) EXPECT_EQ(v[dom], 1.0);
    EXPECT_GE(a.f0_min_hz, 80.0);
    EXPECT_LE(a.f0_max_hz, 400.0);
  }
  EXPECT_NE(SpeakerModel::generate(0, 3).envelope[0].center_hz, SpeakerModel::generate(1, 3).envelope[0].center_hz);
}

TEST(Speaker, ValidationRejectsBadModels) {
  SpeakerModel s = SpeakerModel::generate(0, 1);
  s.vowels[2][0] = 0.0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = SpeakerModel::generate(0, 1);
  s.f0_min_hz = 50;
  EXPECT_THROW(s.validate(), ValidationError);
  s = SpeakerModel::generate(0, 1);
  s.envelope.resize(1);
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Synthesis, UtteranceIsDeterministicWithSpeechLevel) {
  const SpeakerModel spk = SpeakerModel::generate(4, 9);
  const Waveform a = synth_utterance(spk, 2.0, 123), b = synth_utterance(spk, 2.0, 123);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.size(), 32000u);
  EXPECT_NEAR(std::sqrt(mean_square(a.samples)), kSpeechRms, 1e-3 * kSpeechRms);
  EXPECT_NE(synth_utterance(spk, 2.0, 124).samples, a.samples);
  EXPECT_THROW(synth_utterance(spk, 0.5, 1), std::invalid_argument);
}

TEST(Synthesis, NoiseHasUnitPowerAndIsDeterministic) {
  for (NoiseKind k : {NoiseKind::white, NoiseKind::pink, NoiseKind::tonal, NoiseKind::babble}) {
    const Waveform n = synth_noise(k, 1.5, 77);
    EXPECT_NEAR(mean_square(n.samples), 1.0, 1e-12) << to_string(k);
    EXPECT_EQ(n.samples, synth_noise(k, 1.5, 77).samples) << to_string(k);
  }
  EXPECT_THROW(synth_noise(NoiseKind::white, 0.0, 1), std::invalid_argument);
}

TEST(Synthesis, PinkNoiseHasEqualPowerPerOctave) {
  const Waveform pink = synth_noise(NoiseKind::pink, 1.0, 5);
  const Waveform white = synth_noise(NoiseKind::white, 1.0, 5);
  const auto pp = periodogram(pink.samples), pw = periodogram(white.samples);
  // Power density ~ 1/f: equal power per octave.  White doubles per octave.
  const double p1 = band_power(pp, 500, 1000), p2 = band_power(pp, 1000, 2000), p3 = band_power(pp, 2000, 4000);
  EXPECT_NEAR(10 * std::log10(p2 / p1), 0.0, 1.5);
  EXPECT_NEAR(10 * std::log10(p3 / p2), 0.0, 1.5);
  EXPECT_NEAR(10 * std::log10(band_power(pw, 2000, 4000) / band_power(pw, 1000, 2000)), 3.0, 1.0);
}

TEST(Synthesis, TonalNoiseConcentratesInThreePeaks) {
  const auto p = periodogram(synth_noise(NoiseKind::tonal, 1.0, 11).samples);
  std::vector<double> q = p;
  double total = 0;
  for (double v : p) total += v;
  double captured = 0;
  for (int peak = 0; peak < 3; ++peak) {
    const auto it = std::max_element(q.begin(), q.end());
    const std::size_t k = static_cast<std::size_t>(it - q.begin());
    const double f = k * 16000.0 / 1024.0;
    EXPECT_GE(f, 180.0);
    EXPECT_LE(f, 3020.0);
    for (std::size_t j = k > 3 ? k - 3 : 0; j <= std::min(q.size() - 1, k + 3); ++j) {
      captured += q[j];
      q[j] = 0;
    }
  }
  EXPECT_GT(captured / total, 0.99);
}

TEST(Mixing, GainExamples) {
  const Waveform clean(std::vector<double>(1000, 0.5));
  std::vector<double> alt(1000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? 0.5 : -0.5;
  const Waveform noise(alt);
  EXPECT_NEAR(snr_noise_gain(clean, noise, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(snr_noise_gain(clean, noise, 20.0), 0.1, 1e-15);
  EXPECT_NEAR(snr_noise_gain(clean, noise, -20.0), 10.0, 1e-13);
  const Waveform mixed = mix_at_snr(clean, noise, 0.0);
  EXPECT_EQ(mixed.samples[0], 0.0);
  EXPECT_EQ(mixed.samples[1], 1.0);
}

TEST(Mixing, Errors) {
  const Waveform clean(std::vector<double>(100, 0.1));
  EXPECT_THROW(mix_at_snr(clean, Waveform(std::vector<double>(99, 1.0)), 5), std::invalid_argument);
  EXPECT_THROW(mix_at_snr(Waveform(std::vector<double>(100, 0.0)), clean, 5), std::invalid_argument);
  EXPECT_THROW(mix_at_snr(clean, Waveform(std::vector<double>(100, 0.0)), 5), std::invalid_argument);
}

TEST(MixingProperty, MeasuredSnrMatchesTarget) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> snr(-10, 30);
  const SpeakerModel spk = SpeakerModel::generate(1, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const Waveform clean = synth_utterance(spk, 1.0, rng());
    const Waveform noise = synth_noise(static_cast<NoiseKind>(trial % 3), 1.2, rng());
    const double target = snr(rng);
    const double alpha = snr_noise_gain(clean, noise, target);
    std::vector<double> added(clean.size());
    for (std::size_t i = 0; i < added.size(); ++i) added[i] = alpha * noise.samples[i];
    EXPECT_NEAR(measured_snr_db(clean, Waveform(added)), target, 1e-9);
  }
}

TEST(Names, RoundTrip) {
  for (Split s : {Split::train_clean, Split::train_clean_aug, Split::train_noisy, Split::train_noisy_aug,
                  Split::test_clean, Split::test_noisy})
    EXPECT_EQ(parse_split(to_string(s)), s);
  for (NoiseKind k : {NoiseKind::white, NoiseKind::pink, NoiseKind::tonal, NoiseKind::babble})
    EXPECT_EQ(parse_noise_kind(to_string(k)), k);
  EXPECT_THROW(parse_split("dev"), std::invalid_argument);
  EXPECT_THROW(parse_noise_kind("brown"), std::invalid_argument);
}

TEST(Corpus, CountsAndPairing) {
  const CorpusConfig cfg = small_config();
  const Manifest m = build_corpus(cfg);
  EXPECT_EQ(m.speaker_count, 5);
  EXPECT_EQ(m.config_hash, cfg.hash());
  for (Split s : {Split::train_clean, Split::train_clean_aug, Split::train_noisy, Split::train_noisy_aug})
    EXPECT_EQ(m.select(s).size(), 30u) << to_string(s);
  EXPECT_EQ(m.select(Split::test_clean).size(), 6u);
  EXPECT_EQ(m.select(Split::test_noisy).size(), 6u);
  EXPECT_EQ(m.records.size(), 132u);
  for (const auto& r : m.records) {
    if (r.paired_clean_id) {
      const auto& p = m.find(*r.paired_clean_id);
      EXPECT_EQ(p.speaker_id, r.speaker_id);
      EXPECT_TRUE(p.split == Split::train_clean || p.split == Split::train_clean_aug || p.split == Split::test_clean);
    }
  }
}

TEST(CorpusProperty, SnrSetsAndSpeakerDisjointness) {
  for (std::uint64_t seed : {0, 1, 2, 3}) {
    const CorpusConfig cfg = small_config(seed);
    const Manifest m = build_corpus(cfg);
    for (const auto& r : m.records) {
      if (r.split == Split::train_noisy || r.split == Split::train_noisy_aug) {
        ASSERT_TRUE(r.snr_db);
        EXPECT_GT(*r.snr_db, 0.0);
        EXPECT_LT(*r.snr_db, 20.0);
        for (double x : {0.0, 5.0, 10.0, 15.0, 20.0}) EXPECT_GT(std::abs(*r.snr_db - x), cfg.exclusion_window_db);
      }
      if (r.split == Split::test_noisy) {
        ASSERT_TRUE(r.snr_db);
        const std::set<double> allowed{0, 5, 10, 15, 20};
        EXPECT_TRUE(allowed.count(*r.snr_db)) << *r.snr_db;
      }
    }
    std::set<int> train, test;
    for (const auto& r : m.records) (is_train_split(r.split) ? train : test).insert(r.speaker_id);
    for (int s : train) EXPECT_FALSE(test.count(s));
    EXPECT_EQ(train.size(), 3u);
    EXPECT_EQ(test.size(), 2u);
  }
}

TEST(CorpusProperty, SignalsAreBasePlusAddedAtTheStatedSnr) {
  const CorpusRecipe recipe(small_config());
  for (std::size_t g = 0; g < recipe.group_count(); g += 4) {
    const auto group = recipe.synthesize_group(g);
    for (const auto& [split, utt] : group) {
      const auto& rec = recipe.manifest().find(recipe.group_ids(g).at(split));
      if (!rec.snr_db) {
        EXPECT_EQ(utt.signal.samples, utt.base.samples);
        continue;
      }
      ASSERT_EQ(utt.signal.size(), utt.base.size());
      for (std::size_t i = 0; i < utt.signal.size(); ++i)
        ASSERT_EQ(utt.signal.samples[i], utt.base.samples[i] + utt.added.samples[i]);
      EXPECT_NEAR(measured_snr_db(utt.base, utt.added), *rec.snr_db, 1e-6) << rec.utt_id;
    }
    if (group.count(Split::train_noisy_aug)) {
      EXPECT_EQ(group.at(Split::train_noisy_aug).base.samples, group.at(Split::train_clean_aug).signal.samples);
    }
  }
}

TEST(Corpus, SynthesizeSingleRecordMatchesGroup) {
  const CorpusRecipe recipe(small_config());
  const auto& rec = recipe.manifest().select(Split::train_noisy)[4];
  const auto one = recipe.synthesize(*rec);
  EXPECT_GE(frame_count(one.signal.size()), 250u);
  UtteranceRecord bogus = *rec;
  bogus.utt_id = "nope";
  EXPECT_THROW(recipe.synthesize(bogus), std::out_of_range);
}

TEST(Corpus, ConfigValidation) {
  auto expect_invalid = [](auto mutate, const std::string& needle) {
    CorpusConfig c = small_config();
    mutate(c);
    try {
      c.validate();
      ADD_FAILURE() << "expected ValidationError for " << needle;
    } catch (const ValidationError& e) {
      bool found = false;
      for (const auto& v : e.violations()) found |= v.find(needle) != std::string::npos;
      EXPECT_TRUE(found) << e.what();
    }
  };
  expect_invalid([](CorpusConfig& c) { c.test_speakers = 1; }, "test_speakers");
  expect_invalid([](CorpusConfig& c) { c.train_utts_per_speaker = 4; }, "train_utts_per_speaker");
  expect_invalid([](CorpusConfig& c) { c.min_duration_s = 2.0; }, "min_frames");
  expect_invalid([](CorpusConfig& c) { c.max_duration_s = 2.0; }, "max_duration_s");
  expect_invalid([](CorpusConfig& c) { c.test_snrs.clear(); }, "test_snrs");
  expect_invalid([](CorpusConfig& c) { c.second_family_fraction = 2; }, "second_family_fraction");
  expect_invalid([](CorpusConfig& c) { c.exclusion_window_db = 3; }, "admissible");
  EXPECT_THROW(CorpusRecipe(CorpusConfig{.test_speakers = 0}), ValidationError);
}

TEST(Corpus, HashTracksContentNotIdentity) {
  EXPECT_EQ(small_config().hash(), small_config().hash());
  EXPECT_NE(small_config(1).hash(), small_config(2).hash());
  CorpusConfig c = small_config();
  c.test_snrs = {0, 5};
  EXPECT_NE(c.hash(), small_config().hash());
  EXPECT_EQ(c.hash().size(), 16u);
}

TEST(Manifest, TextRoundTrip) {
  const Manifest m = build_corpus(small_config());
  const Manifest r = Manifest::parse(m.to_text());
  EXPECT_EQ(r.records, m.records);
  EXPECT_EQ(r.speaker_count, m.speaker_count);
  EXPECT_EQ(r.config_hash, m.config_hash);
  EXPECT_EQ(r.to_text(), m.to_text());
}

TEST(Manifest, RejectsMalformedInput) {
  EXPECT_THROW(Manifest::parse("a\tb\tc\n"), IntegrityError);
  Manifest m = build_corpus(small_config());
  m.records.push_back(m.records.front());
  EXPECT_THROW(m.validate(), ValidationError);
  m = build_corpus(small_config());
  m.records.back().speaker_id = 0;  // a training speaker in the test split
  EXPECT_THROW(m.validate(), ValidationError);
  m = build_corpus(small_config());
  m.records.front().snr_db = 3.0;  // clean record with an SNR
  EXPECT_THROW(m.validate(), ValidationError);
  EXPECT_THROW(m.validate(11), ValidationError);
  EXPECT_THROW(m.find("missing"), std::out_of_range);
}

TEST(Corpus, RegenerationIsByteIdentical) {
  CorpusConfig cfg = small_config(3);
  cfg.train_speakers = 1;
  cfg.test_utts_per_speaker = 2;
  ScratchDir a, b;
  const CorpusRecipe recipe(cfg);
  write_corpus(recipe, a.path(), 1);
  write_corpus(CorpusRecipe(cfg), b.path(), 2);
  std::size_t files = 0;
  for (const auto& r : recipe.manifest().records) {
    EXPECT_EQ(read_file(a / r.path), read_file(b / r.path)) << r.path;
    ++files;
  }
  EXPECT_EQ(files, recipe.manifest().records.size());
  // 16-bit storage: within half a quantization step of the mixture.
  const auto* noisy = recipe.manifest().select(Split::test_noisy)[0];
  const Waveform stored = read_wav(a / noisy->path), exact = recipe.synthesize(*noisy).signal;
  ASSERT_EQ(stored.size(), exact.size());
  for (std::size_t i = 0; i < exact.size(); ++i) ASSERT_NEAR(stored.samples[i], exact.samples[i], 0.5 / 32768 + 1e-12);
}

}  // namespace
}  // namespace nvl
