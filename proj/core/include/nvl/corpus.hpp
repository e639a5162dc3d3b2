// core/include/nvl/corpus.hpp

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

#ifndef NVL_CORPUS_HPP_
#define NVL_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvl/dsp.hpp"

namespace nvl {

/// Configuration problems, one human-readable line per violated field.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct Resonance {
  double center_hz;
  double bandwidth_hz;
  double gain;
};

/// Parametric voice: pitch range plus a resonance envelope.
struct SpeakerModel {
  int speaker_id = 0;
  double f0_min_hz = 100;
  double f0_max_hz = 150;
  std::vector<Resonance> envelope;
  /// Vowel inventory: per vowel, a weight in (0, 1] for every resonance.
  /// The strongest resonance always has weight 1.
  std::vector<std::vector<double>> vowels;
  std::uint64_t seed = 0;

  /// Seeded draw; five resonances, dominant one at gain 1, six vowels.
  static SpeakerModel generate(int speaker_id, std::uint64_t seed);
  void validate() const;
  const Resonance& strongest() const;
};

enum class NoiseKind { white, pink, tonal, babble };

/// Speech level of every synthesized clean utterance (RMS, full scale = 1).
inline constexpr double kSpeechRms = 0.05;

Waveform synth_utterance(const SpeakerModel& spk, double duration_s, std::uint64_t seed);
/// Unit-power noise.  Babble sums four speakers drawn outside every corpus id range.
Waveform synth_noise(NoiseKind kind, double duration_s, std::uint64_t seed);

/// Gain that brings `noise` to `snr_db` below `clean`, both powers measured
/// over the clean utterance's length.
double snr_noise_gain(const Waveform& clean, const Waveform& noise, double snr_db);
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db);
double measured_snr_db(const Waveform& clean, const Waveform& added);

enum class Split { train_clean, train_clean_aug, train_noisy, train_noisy_aug, test_clean, test_noisy };

std::string to_string(Split s);
std::string to_string(NoiseKind k);
Split parse_split(const std::string& s);
NoiseKind parse_noise_kind(const std::string& s);
bool split_has_snr(Split s);
bool is_train_split(Split s);

struct UtteranceRecord {
  std::string utt_id;
  int speaker_id = 0;
  Split split = Split::train_clean;
  std::optional<double> snr_db;
  std::optional<std::string> paired_clean_id;
  std::string path;  // relative to the corpus root

  friend bool operator==(const UtteranceRecord&, const UtteranceRecord&) = default;
};

/// Tab-separated manifest, one record per line, with a "#" header carrying
/// the speaker count and the generation config hash.
struct Manifest {
  std::vector<UtteranceRecord> records;
  int speaker_count = 0;
  std::string config_hash;

  const UtteranceRecord& find(const std::string& utt_id) const;
  const UtteranceRecord* try_find(const std::string& utt_id) const;
  std::vector<const UtteranceRecord*> select(Split split) const;
  std::vector<int> speakers_in(Split split) const;
  /// Structural invariants; throws ValidationError.
  void validate(int min_train_utts_per_speaker = 0) const;

  std::string to_text() const;
  static Manifest parse(const std::string& text);
  void write(const std::filesystem::path& path) const;
  static Manifest read(const std::filesystem::path& path);
};

struct CorpusConfig {
  std::uint64_t seed = 0;
  int train_speakers = 20;
  int test_speakers = 10;
  int train_utts_per_speaker = 12;
  int test_utts_per_speaker = 8;
  double min_duration_s = 3.0;
  double max_duration_s = 6.0;
  double train_snr_min_db = 0.0;
  double train_snr_max_db = 20.0;
  std::vector<double> excluded_train_snrs{0, 5, 10, 15, 20};
  double exclusion_window_db = 0.01;
  std::vector<double> test_snrs{0, 5, 10, 15, 20};
  double aug_snr_min_db = 5.0;
  double aug_snr_max_db = 20.0;
  /// Noise family for the noisy splits, the test noise, and half of the augmentation.
  std::vector<NoiseKind> noise_kinds{NoiseKind::pink, NoiseKind::tonal, NoiseKind::babble};
  /// Second augmentation family; its noisy copies keep the augmentation in their target.
  std::vector<NoiseKind> second_family_kinds{NoiseKind::white};
  double second_family_fraction = 0.5;
  int min_frames = 250;
  int min_train_utts_per_speaker = 10;

  void validate() const;
  /// Canonical "key = value" lines; the config hash is computed over this.
  std::string canonical_text() const;
  std::string hash() const;
};

/// In-memory synthesis result: signal == base + added (added is empty for
/// utterances that are not mixtures).
struct SynthesizedUtterance {
  Waveform signal;
  Waveform base;
  Waveform added;
};

/// Deterministic plan for a whole corpus.  Every record can be regenerated
/// in memory from the config alone.
class CorpusRecipe {
 public:
  explicit CorpusRecipe(CorpusConfig cfg);

  const CorpusConfig& config() const { return cfg_; }
  const Manifest& manifest() const { return manifest_; }
  const SpeakerModel& speaker(int id) const { return speakers_.at(static_cast<std::size_t>(id)); }

  SynthesizedUtterance synthesize(const UtteranceRecord& record) const;
  /// All records derived from one clean source, keyed by split.
  std::map<Split, SynthesizedUtterance> synthesize_group(std::size_t group) const;
  std::size_t group_count() const { return groups_.size(); }
  const std::map<Split, std::string>& group_ids(std::size_t group) const { return groups_.at(group).ids; }

 private:
  struct Group {
    int speaker_id;
    int utt_index;
    bool test;
    double duration_s;
    std::uint64_t seed;
    NoiseKind noise_kind;
    double snr_db;
    NoiseKind aug_kind;
    bool aug_second_family;
    double aug_snr_db;
    std::map<Split, std::string> ids;
  };

  CorpusConfig cfg_;
  std::vector<SpeakerModel> speakers_;
  std::vector<Group> groups_;
  std::map<std::string, std::size_t> group_of_;
  Manifest manifest_;
};

Manifest build_corpus(const CorpusConfig& cfg);

/// Writes wav/<split>/<utt>.wav, manifest.tsv and corpus.cfg under root.
void write_corpus(const CorpusRecipe& recipe, const std::filesystem::path& root, int workers = 1);

}  // namespace nvl

#endif  // NVL_CORPUS_HPP_
