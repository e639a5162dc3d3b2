// tests/unit/test_trainer.cpp

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
#include <set>

#include "nvl/trainer.hpp"
#include "nvl/util.hpp"
#include "nvl_test.hpp"

namespace nvl {
namespace {

CorpusConfig small_corpus() {
  CorpusConfig c;
  c.seed = 11;
  c.train_speakers = 3;
  c.test_speakers = 2;
  c.train_utts_per_speaker = 10;
  c.test_utts_per_speaker = 3;
  c.min_duration_s = 2.6;
  c.max_duration_s = 2.8;
  return c;
}

// One in-memory corpus shared by the suite.
struct World {
  CorpusRecipe recipe{small_corpus()};
  FeatureBank bank;

  World() {
    for (const auto& r : recipe.manifest().records)
      if (is_train_split(r.split)) bank.add(r.utt_id, logmel(recipe.synthesize(r).signal));
  }
  const Manifest& manifest() const { return recipe.manifest(); }
};

const World& world() {
  static const World w;
  return w;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.seed = 5;
  c.enhancer = {.layers = 1, .hidden = 4};
  c.embedder = {.tdnn_width = 6, .pool_width = 8, .embedding_dim = 6, .fc2_dim = 6, .num_speakers = 3};
  c.segment_frames = 20;
  c.halve_threshold = 0.0;
  c.pretrain1 = {OptimizerKind::sgd, 0.05, 8, 3};
  c.pretrain2 = {OptimizerKind::adadelta, 0.5, 8, 2};
  c.finetune = {OptimizerKind::adadelta, 0.5, 8, 1};
  c.group_size = 4;
  return c;
}

// ---------------------------------------------------------------------------
// Pairing and batching

TEST(Pairing, StagePairsCoverBothNoisySplits) {
  const Manifest& m = world().manifest();
  const auto pairs = stage_pairs(m);
  EXPECT_EQ(pairs.size(), m.select(Split::train_noisy).size() + m.select(Split::train_noisy_aug).size());
  EXPECT_EQ(pairs.size(), 2u * 3u * 10u);
  std::set<std::string> noisy;
  for (const auto& p : pairs) {
    const auto& rn = m.find(p.noisy);
    const auto& rc = m.find(p.clean);
    EXPECT_TRUE(rn.split == Split::train_noisy || rn.split == Split::train_noisy_aug);
    if (rn.split == Split::train_noisy) EXPECT_EQ(rc.split, Split::train_clean);
    else EXPECT_TRUE(rc.split == Split::train_clean || rc.split == Split::train_clean_aug);
    EXPECT_EQ(rn.speaker_id, rc.speaker_id);
    EXPECT_EQ(p.speaker, rn.speaker_id);
    EXPECT_EQ(world().bank.get(p.noisy).frames(), world().bank.get(p.clean).frames());
    noisy.insert(p.noisy);
  }
  EXPECT_EQ(noisy.size(), pairs.size());
  EXPECT_NO_THROW(validate_pairs(m, pairs));
}

TEST(Pairing, ValidateRejectsWrongPartner) {
  const Manifest& m = world().manifest();
  auto pairs = stage_pairs(m);
  std::swap(pairs[0].clean, pairs[1].clean);
  EXPECT_THROW(validate_pairs(m, pairs), std::invalid_argument);
  pairs = stage_pairs(m);
  pairs[0].speaker = (pairs[0].speaker + 1) % 3;
  EXPECT_THROW(validate_pairs(m, pairs), std::invalid_argument);
}

TEST(Pairing, BatchesHoldKNoisyAndTheirCleanPartners) {
  const Manifest& m = world().manifest();
  const auto pairs = stage_pairs(m);
  for (int k : {1, 7, 8, 60, 64}) {
    const auto batches = make_pair_batches(pairs, k, 3);
    ASSERT_EQ(batches.size(), (pairs.size() + k - 1) / k) << k;
    std::multiset<std::string> seen;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const std::size_t expect = b + 1 < batches.size() ? static_cast<std::size_t>(k)
                                                          : pairs.size() - (batches.size() - 1) * k;
      EXPECT_EQ(batches[b].size(), expect);
      std::set<std::string> noisy;
      for (const auto& p : batches[b]) {
        noisy.insert(p.noisy);
        EXPECT_EQ(*m.find(p.noisy).paired_clean_id, p.clean);
        seen.insert(p.noisy);
      }
      EXPECT_EQ(noisy.size(), batches[b].size());
      validate_pairs(m, batches[b]);
    }
    EXPECT_EQ(seen.size(), pairs.size());
    EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), pairs.size());
  }
}

TEST(Pairing, BatchOrderIsSeeded) {
  const auto pairs = stage_pairs(world().manifest());
  auto flat = [](const std::vector<std::vector<TrainingPair>>& bs) {
    std::vector<std::string> v;
    for (const auto& b : bs)
      for (const auto& p : b) v.push_back(p.noisy);
    return v;
  };
  EXPECT_EQ(flat(make_pair_batches(pairs, 8, 1)), flat(make_pair_batches(pairs, 8, 1)));
  EXPECT_NE(flat(make_pair_batches(pairs, 8, 1)), flat(make_pair_batches(pairs, 8, 2)));
  EXPECT_THROW(make_pair_batches(pairs, 0, 1), std::invalid_argument);
}

TEST(Pairing, ClipOffsetStaysInRange) {
  EXPECT_EQ(clip_offset(10, 10, 99), 0u);
  EXPECT_EQ(clip_offset(10, 20, 99), 0u);
  EXPECT_EQ(clip_offset(300, 100, 7), 7u);
  for (std::uint64_t s = 0; s < 500; ++s) {
    const std::size_t off = clip_offset(50, 17, s * 7919);
    EXPECT_LE(off + 17, 50u);
  }
  std::set<std::size_t> offsets;
  for (std::uint64_t s = 0; s < 200; ++s) offsets.insert(clip_offset(30, 20, s));
  EXPECT_EQ(offsets.size(), 11u);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(TrainConfigTest, DefaultsValidate) { EXPECT_NO_THROW(TrainConfig{}.validate()); }

TEST(TrainConfigTest, RejectsBadValues) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ValidationError);
  };
  bad([](TrainConfig& c) { c.segment_frames = 14; });
  bad([](TrainConfig& c) { c.lambda = 1.5; });
  bad([](TrainConfig& c) { c.norm.sigma_power = 3; });
  bad([](TrainConfig& c) { c.max_halvings = 0; });
  bad([](TrainConfig& c) { c.group_size = 0; });
  bad([](TrainConfig& c) { c.workers = 0; });
  bad([](TrainConfig& c) { c.pretrain2.lr = -1; });
  bad([](TrainConfig& c) { c.finetune.batch = 0; });
  bad([](TrainConfig& c) { c.pretrain1.max_epochs = 0; });
  bad([](TrainConfig& c) { c.enhancer.hidden = 0; });
}

TEST(TrainConfigTest, StageAndSystemNames) {
  for (Stage s : {Stage::pretrain1, Stage::pretrain2, Stage::finetune}) EXPECT_EQ(parse_stage(to_string(s)), s);
  for (System s : {System::a, System::b, System::c, System::d}) EXPECT_EQ(parse_system(to_string(s)), s);
  EXPECT_THROW(parse_system("e"), std::invalid_argument);
  EXPECT_THROW(parse_stage("pretrain3"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Stages

struct Runs {
  TrainingLog log;
  TrainContext ctx;
  StageResult p1;

  explicit Runs(const TrainConfig& cfg) {
    ctx = TrainContext::make(world().manifest(), world().bank, "test", &log);
    p1 = run_pretrain1(ctx, cfg);
  }
};

TEST(Stages, ContextStatsComeFromTrainingSplits) {
  const auto ctx = TrainContext::make(world().manifest(), world().bank, "h");
  const auto noisy = world().bank.stats(world().manifest(), Split::train_noisy);
  const auto clean = world().bank.stats(world().manifest(), Split::train_clean);
  EXPECT_EQ(ctx.noisy_stats.mu, noisy.mu);
  EXPECT_EQ(ctx.clean_stats.sigma, clean.sigma);
  EXPECT_NE(ctx.noisy_stats.mu, ctx.clean_stats.mu);
  EXPECT_THROW(world().bank.get("missing"), std::out_of_range);
}

TEST(Stages, Pretrain1ReducesLossOnToyCorpus) {
  TrainConfig cfg = tiny_config();
  cfg.pretrain1 = {OptimizerKind::sgd, 0.05, 8, 6};
  cfg.max_halvings = 10;
  Runs r(cfg);
  ASSERT_EQ(r.p1.epoch_losses.size(), 6u);
  EXPECT_LT(r.p1.epoch_losses.back(), r.p1.epoch_losses.front());
  EXPECT_FALSE(r.p1.enhancer.has_value());
  EXPECT_EQ(r.p1.checkpoint.stage, "pretrain1");
  EXPECT_FALSE(r.p1.checkpoint.has("enhancer/arch"));
  // 3 speakers x 10 augmented clean utterances, batches of 8.
  EXPECT_EQ(r.p1.steps, 6u * 4u);
}

TEST(Stages, Pretrain2KeepsEmbedderFrozen) {
  const TrainConfig cfg = tiny_config();
  Runs r(cfg);
  const auto before = parameter_checksum(r.p1.embedder.parameters());
  for (System s : {System::a, System::b, System::c}) {
    const StageResult p2 = run_pretrain2(r.ctx, r.p1.checkpoint, cfg, s);
    EXPECT_EQ(parameter_checksum(p2.embedder.parameters()), before) << to_string(s);
    EXPECT_EQ(parameter_checksum(Embedder::load(p2.checkpoint).parameters()), before);
    ASSERT_TRUE(p2.enhancer.has_value());
    const Enhancer init(cfg.enhancer, derive_seed(cfg.seed, "enhancer"));
    EXPECT_NE(parameter_checksum(p2.enhancer->parameters()), parameter_checksum(init.parameters()));
    EXPECT_EQ(p2.checkpoint.stage, "pretrain2");
    EXPECT_EQ(p2.checkpoint.get("train/system").values.at(0), static_cast<double>(static_cast<int>(s)));
    // 60 pairs in batches of 8 per epoch.
    EXPECT_EQ(p2.steps, 2u * 8u);
  }
}

TEST(Stages, Pretrain2StepsLogBatchOfPairs) {
  const TrainConfig cfg = tiny_config();
  Runs r(cfg);
  const std::size_t before = r.log.lines().size();
  run_pretrain2(r.ctx, r.p1.checkpoint, cfg, System::c);
  std::size_t steps = 0, epochs = 0;
  for (std::size_t i = before; i < r.log.lines().size(); ++i) {
    const std::string& l = r.log.lines()[i];
    if (l.find("\"type\":\"step\"") != std::string::npos) {
      ++steps;
      EXPECT_NE(l.find("\"pcptl\":"), std::string::npos);
      EXPECT_EQ(l.find("\"pcptl\":null"), std::string::npos);
    }
    if (l.find("\"type\":\"epoch\"") != std::string::npos) ++epochs;
  }
  EXPECT_EQ(steps, 16u);
  EXPECT_EQ(epochs, 2u);
}

TEST(Stages, FinetuneUpdatesBothModules) {
  const TrainConfig cfg = tiny_config();
  Runs r(cfg);
  const StageResult p2 = run_pretrain2(r.ctx, r.p1.checkpoint, cfg, System::c);
  const StageResult ft = run_finetune(r.ctx, p2.checkpoint, cfg);
  EXPECT_NE(parameter_checksum(ft.embedder.parameters()), parameter_checksum(p2.embedder.parameters()));
  EXPECT_NE(parameter_checksum(ft.enhancer->parameters()), parameter_checksum(p2.enhancer->parameters()));
  EXPECT_EQ(ft.checkpoint.stage, "finetune");
  EXPECT_EQ(ft.checkpoint.get("train/system").values.at(0), static_cast<double>(static_cast<int>(System::d)));
}

TEST(Stages, ZeroLearningRateLeavesParametersUnchanged) {
  TrainConfig cfg = tiny_config();
  Runs r(cfg);
  const StageResult p2 = run_pretrain2(r.ctx, r.p1.checkpoint, cfg, System::c);
  cfg.finetune.lr = 0.0;
  const StageResult ft = run_finetune(r.ctx, p2.checkpoint, cfg);
  EXPECT_EQ(parameter_checksum(ft.embedder.parameters()), parameter_checksum(p2.embedder.parameters()));
  EXPECT_EQ(parameter_checksum(ft.enhancer->parameters()), parameter_checksum(p2.enhancer->parameters()));
}

TEST(Stages, WrongCheckpointStageIsRejected) {
  const TrainConfig cfg = tiny_config();
  Runs r(cfg);
  EXPECT_THROW(run_finetune(r.ctx, r.p1.checkpoint, cfg), std::invalid_argument);
  const StageResult p2 = run_pretrain2(r.ctx, r.p1.checkpoint, cfg, System::a);
  EXPECT_THROW(run_pretrain2(r.ctx, p2.checkpoint, cfg, System::a), std::invalid_argument);
  EXPECT_THROW(run_pretrain2(r.ctx, r.p1.checkpoint, cfg, System::d), std::invalid_argument);
  EXPECT_THROW(pipeline_from_checkpoint(r.p1.checkpoint, false), std::invalid_argument);
  EXPECT_NO_THROW(pipeline_from_checkpoint(r.p1.checkpoint, true));
}

TEST(Stages, ResultsDoNotDependOnWorkerCount) {
  TrainConfig cfg = tiny_config();
  TrainingLog log1, log3;
  const auto ctx1 = TrainContext::make(world().manifest(), world().bank, "h", &log1);
  const auto ctx3 = TrainContext::make(world().manifest(), world().bank, "h", &log3);
  const StageResult a = run_pretrain1(ctx1, cfg);
  const StageResult a2 = run_pretrain2(ctx1, a.checkpoint, cfg, System::c);
  cfg.workers = 3;
  const StageResult b = run_pretrain1(ctx3, cfg);
  const StageResult b2 = run_pretrain2(ctx3, b.checkpoint, cfg, System::c);
  EXPECT_EQ(a.checkpoint.serialize(), b.checkpoint.serialize());
  EXPECT_EQ(a2.checkpoint.serialize(), b2.checkpoint.serialize());
  EXPECT_EQ(log1.lines(), log3.lines());
}

TEST(Stages, SeedChangesTheRun) {
  TrainConfig cfg = tiny_config();
  const auto ctx = TrainContext::make(world().manifest(), world().bank, "h");
  const StageResult a = run_pretrain1(ctx, cfg);
  cfg.seed = 6;
  const StageResult b = run_pretrain1(ctx, cfg);
  EXPECT_NE(a.checkpoint.serialize(), b.checkpoint.serialize());
}

// ---------------------------------------------------------------------------
// Reports

TEST(Report, JsonRoundTrip) {
  AblationReport r;
  r.config_hash = "abc";
  r.seed = 2;
  r.trials = 40;
  r.systems.push_back({"baseline", "h0", {{"clean", {0.125, 0.5}}, {"noisy", {0.25, 0.75}}}});
  r.systems.push_back({"d", "h1", {{"clean", {0.0625, 0.25}}, {"noisy", {0.1875, 0.375}}}});
  const AblationReport back = AblationReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_DOUBLE_EQ(back.system("d").metrics.at("noisy").eer, 0.1875);
  EXPECT_THROW(back.system("e"), std::out_of_range);
  EXPECT_NE(r.to_table().find("baseline"), std::string::npos);
  EXPECT_NE(r.to_table().find("12.50"), std::string::npos);
}

}  // namespace
}  // namespace nvl
