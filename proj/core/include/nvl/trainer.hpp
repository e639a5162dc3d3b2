// core/include/nvl/trainer.hpp

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

#ifndef NVL_TRAINER_HPP_
#define NVL_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nvl/corpus.hpp"
#include "nvl/eval.hpp"
#include "nvl/losses.hpp"
#include "nvl/models.hpp"
#include "nvl/optim.hpp"

namespace nvl {

enum class Stage { pretrain1, pretrain2, finetune };
std::string to_string(Stage s);
Stage parse_stage(const std::string& s);

/// Ablation systems: a = CE on the enhanced noisy branch, b = perceptual
/// loss against an unenhanced clean reference, c = perceptual + CE on both
/// branches, d = c followed by joint fine-tuning.
enum class System { a, b, c, d };
std::string to_string(System s);
System parse_system(const std::string& s);

struct StageConfig {
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.1;
  /// Utterances per batch in pretrain1; noisy/clean pairs per batch otherwise.
  int batch = 32;
  int max_epochs = 50;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  EnhancerConfig enhancer;
  EmbedderConfig embedder;
  int segment_frames = 300;
  double lambda = 0.5;
  NormOptions norm;
  PerceptualOptions perceptual;
  double halve_threshold = 0.01;
  int max_halvings = 2;
  StageConfig pretrain1{OptimizerKind::sgd, 0.2, 512, 50};
  StageConfig pretrain2{OptimizerKind::adadelta, 0.3, 64, 50};
  StageConfig finetune{OptimizerKind::adadelta, 1e-4, 64, 50};
  /// Examples per gradient group.  Groups are evaluated independently and
  /// reduced in index order, so results do not depend on `workers`.
  int group_size = 8;
  int workers = 1;

  void validate() const;
  const StageConfig& stage(Stage s) const;
};

/// Log-Mel features of every training utterance, keyed by utt_id.
class FeatureBank {
 public:
  /// Reads the audio of all training splits under `root`.
  static FeatureBank from_corpus(const Manifest& manifest, const std::filesystem::path& root, int workers = 1);

  void add(const std::string& utt_id, Spectrogram s);
  const Spectrogram& get(const std::string& utt_id) const;
  bool contains(const std::string& utt_id) const { return features_.count(utt_id) != 0; }
  ChannelStats stats(const Manifest& manifest, Split split) const;

 private:
  std::map<std::string, Spectrogram> features_;
};

struct TrainingPair {
  std::string noisy;
  std::string clean;
  int speaker = 0;
};

/// The three noisy/clean pairings used by the second and third stages.
std::vector<TrainingPair> stage_pairs(const Manifest& manifest);
/// Checks that every pair matches the manifest's recorded clean partner.
void validate_pairs(const Manifest& manifest, const std::vector<TrainingPair>& pairs);
/// Seeded shuffle split into batches of `k` pairs (the last may be short).
std::vector<std::vector<TrainingPair>> make_pair_batches(const std::vector<TrainingPair>& pairs, int k,
                                                         std::uint64_t seed);
/// Common clip offset for a noisy/clean pair of `frames` frames.
std::size_t clip_offset(std::size_t frames, std::size_t segment, std::uint64_t seed);

/// Line-delimited JSON records; kept in memory and optionally mirrored to a file.
class TrainingLog {
 public:
  TrainingLog() = default;
  explicit TrainingLog(const std::filesystem::path& path);

  void write(const std::string& json_line);
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::vector<std::string> lines_;
  std::ofstream out_;
};

/// Everything shared by the stages of one run.
struct TrainContext {
  const Manifest* manifest = nullptr;
  const FeatureBank* bank = nullptr;
  ChannelStats noisy_stats;
  ChannelStats clean_stats;
  std::string config_hash;
  TrainingLog* log = nullptr;

  /// Stats from train_noisy and train_clean.
  static TrainContext make(const Manifest& manifest, const FeatureBank& bank, std::string config_hash,
                           TrainingLog* log = nullptr);
};

struct StageResult {
  std::optional<Enhancer> enhancer;
  Embedder embedder;
  Checkpoint checkpoint;
  std::vector<double> epoch_losses;
  std::vector<double> epoch_lrs;
  std::uint64_t steps = 0;
};

/// Per-pair loss of a second/third-stage system, averaged into the batch loss.
LossValue pair_loss(System system, const Enhancer& enhancer, const Embedder& embedder, const Spectrogram& noisy,
                    const Spectrogram& clean, int speaker, const TrainContext& ctx, const TrainConfig& cfg);

StageResult run_pretrain1(const TrainContext& ctx, const TrainConfig& cfg);
/// Enhancer training against a frozen embedder taken from `pretrain1`.
StageResult run_pretrain2(const TrainContext& ctx, const Checkpoint& pretrain1, const TrainConfig& cfg,
                          System system = System::c);
/// Joint training of both modules from a pretrain2 checkpoint.
StageResult run_finetune(const TrainContext& ctx, const Checkpoint& pretrain2, const TrainConfig& cfg);

/// Pipeline for evaluation.  `baseline` drops the enhancer.
EmbeddingPipeline pipeline_from_checkpoint(const Checkpoint& ck, bool baseline, bool vad = true);

struct EvalConfig {
  int trials_per_speaker = 40;
  double p_target = 0.05;
  bool vad = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SystemReport {
  std::string system;  // "baseline", "a".."d"
  std::string checkpoint_hash;
  std::map<std::string, MetricSummary> metrics;  // by condition
};

struct AblationReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::vector<SystemReport> systems;

  const SystemReport& system(const std::string& id) const;
  std::string to_json() const;
  static AblationReport from_json(const std::string& text);
  /// Plain-text table.
  std::string to_table() const;
};

/// Evaluates one checkpoint in both conditions.
SystemReport evaluate_system(const std::string& system_id, const Checkpoint& ck, bool baseline,
                             const Manifest& manifest, const std::filesystem::path& corpus_root,
                             const std::vector<Trial>& trials, const EvalConfig& eval, int workers,
                             const std::filesystem::path& score_dir = {});

/// pretrain1, then systems a-c through pretrain2, then d by fine-tuning c;
/// evaluates the no-enhancement baseline and a-d in both conditions.
/// Checkpoints, scores, logs and report.json go to `out_dir`.
AblationReport run_ablation(const Manifest& manifest, const std::filesystem::path& corpus_root,
                            const TrainConfig& cfg, const EvalConfig& eval, const std::string& config_hash,
                            const std::filesystem::path& out_dir);

}  // namespace nvl

#endif  // NVL_TRAINER_HPP_
