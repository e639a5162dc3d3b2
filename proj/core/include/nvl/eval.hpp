// core/include/nvl/eval.hpp

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

#ifndef NVL_EVAL_HPP_
#define NVL_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvl/corpus.hpp"
#include "nvl/dsp.hpp"
#include "nvl/models.hpp"

namespace nvl {

/// Drops 25 ms frames (10 ms hop) whose log energy is both 40 dB below the
/// loudest frame and below the utterance mean.  Each frame owns its hop of
/// samples; the last frame also owns the tail.  Throws when nothing is left.
Waveform energy_vad(const Waveform& w);

struct Trial {
  std::string enroll;
  std::string test;
  bool target = false;

  friend bool operator==(const Trial&, const Trial&) = default;
};

/// Balanced target/nontarget trials over the test_clean split: each test
/// speaker enrolls trials_per_speaker/2 target and as many nontarget pairs.
std::vector<Trial> build_trials(const Manifest& manifest, int trials_per_speaker, std::uint64_t seed);

struct ScoreSet {
  std::vector<Trial> trials;
  std::vector<double> scores;

  void validate() const;
  std::vector<double> target_scores() const;
  std::vector<double> nontarget_scores() const;
};

/// Equal error rate in [0, 1]: thresholds at the midpoints of the sorted
/// distinct scores, linear interpolation between the two operating points
/// that bracket P_miss == P_fa.
double eer(std::span<const double> targets, std::span<const double> nontargets);
double eer(const ScoreSet& s);

/// Normalized minimum detection cost with unit costs over the same sweep.
double min_dcf(std::span<const double> targets, std::span<const double> nontargets, double p_target);
double min_dcf(const ScoreSet& s, double p_target);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

enum class Condition { clean, noisy };
std::string to_string(Condition c);
Condition parse_condition(const std::string& s);

/// Everything needed to turn a waveform into an embedding.  Without an
/// enhancer the embedder sees the instance-normalized noisy features.
struct EmbeddingPipeline {
  std::optional<Enhancer> enhancer;
  Embedder embedder;
  ChannelStats noisy_stats;
  ChannelStats clean_stats;
  NormOptions norm;
  bool vad = true;

  /// Normalized features as the embedder sees them.
  Spectrogram features(const Spectrogram& x) const;
  std::vector<double> embed(const Waveform& w) const;
};

/// Scores trials built on test_clean ids.  In the noisy condition both sides
/// are replaced by their test_noisy counterparts.  Audio is read from
/// `corpus_root`.
ScoreSet score_trials(const EmbeddingPipeline& pipeline, const Manifest& manifest,
                      const std::filesystem::path& corpus_root, const std::vector<Trial>& trials,
                      Condition condition, int workers = 1);

struct MetricSummary {
  double eer = 0;
  double min_dcf = 0;
};

void write_trials(const std::filesystem::path& path, const std::vector<Trial>& trials);
std::vector<Trial> read_trials(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path, const ScoreSet& s);

}  // namespace nvl

#endif  // NVL_EVAL_HPP_
