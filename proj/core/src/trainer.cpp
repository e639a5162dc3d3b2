// core/src/trainer.cpp

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

#include "nvl/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "nvl/util.hpp"
#include "nvl/wav.hpp"

namespace nvl {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Names and config

std::string to_string(Stage s) {
  switch (s) {
    case Stage::pretrain1: return "pretrain1";
    case Stage::pretrain2: return "pretrain2";
    case Stage::finetune: return "finetune";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  for (Stage v : {Stage::pretrain1, Stage::pretrain2, Stage::finetune})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown stage '" + s + "' (expected pretrain1, pretrain2 or finetune)");
}

std::string to_string(System s) { return std::string(1, static_cast<char>('a' + static_cast<int>(s))); }

System parse_system(const std::string& s) {
  if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'd') return static_cast<System>(s[0] - 'a');
  throw std::invalid_argument("unknown ablation system '" + s + "' (expected a, b, c or d)");
}

void TrainConfig::validate() const {
  std::vector<std::string> e;
  try {
    enhancer.validate();
  } catch (const std::exception& ex) {
    e.push_back(ex.what());
  }
  try {
    embedder.validate();
  } catch (const std::exception& ex) {
    e.push_back(ex.what());
  }
  if (segment_frames < static_cast<int>(Embedder::receptive_field()))
    e.push_back("train.segment_frames must be >= " + std::to_string(Embedder::receptive_field()));
  if (!(lambda >= 0 && lambda <= 1)) e.push_back("train.lambda must lie in [0, 1]");
  if (norm.sigma_power != 1 && norm.sigma_power != 2) e.push_back("train.sigma_power must be 1 or 2");
  if (!(halve_threshold >= 0)) e.push_back("train.halve_threshold must be >= 0");
  if (max_halvings < 1) e.push_back("train.max_halvings must be >= 1");
  if (group_size < 1) e.push_back("train.group_size must be >= 1");
  if (workers < 1) e.push_back("run.workers must be >= 1");
  for (Stage s : {Stage::pretrain1, Stage::pretrain2, Stage::finetune}) {
    const auto& sc = stage(s);
    if (!(sc.lr >= 0) || !std::isfinite(sc.lr)) e.push_back(to_string(s) + ".lr must be finite and >= 0");
    if (sc.batch < 1) e.push_back(to_string(s) + ".batch must be >= 1");
    if (sc.max_epochs < 1) e.push_back(to_string(s) + ".max_epochs must be >= 1");
  }
  if (!e.empty()) throw ValidationError(e);
}

const StageConfig& TrainConfig::stage(Stage s) const {
  switch (s) {
    case Stage::pretrain1: return pretrain1;
    case Stage::pretrain2: return pretrain2;
    case Stage::finetune: return finetune;
  }
  return pretrain1;
}

void EvalConfig::validate() const {
  std::vector<std::string> e;
  if (trials_per_speaker < 2) e.push_back("eval.trials_per_speaker must be >= 2");
  if (!(p_target > 0 && p_target < 1)) e.push_back("eval.p_target must lie in (0, 1)");
  if (!e.empty()) throw ValidationError(e);
}

// ---------------------------------------------------------------------------
// Data

FeatureBank FeatureBank::from_corpus(const Manifest& manifest, const std::filesystem::path& root, int workers) {
  std::vector<const UtteranceRecord*> records;
  for (const auto& r : manifest.records)
    if (is_train_split(r.split)) records.push_back(&r);
  std::vector<Spectrogram> feats(records.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        feats[i] = logmel(read_wav(root / records[i]->path));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < std::max(1, workers); ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  FeatureBank bank;
  for (std::size_t i = 0; i < records.size(); ++i) bank.add(records[i]->utt_id, std::move(feats[i]));
  return bank;
}

void FeatureBank::add(const std::string& utt_id, Spectrogram s) { features_[utt_id] = std::move(s); }

const Spectrogram& FeatureBank::get(const std::string& utt_id) const {
  auto it = features_.find(utt_id);
  if (it == features_.end()) throw std::out_of_range("feature bank has no utterance '" + utt_id + "'");
  return it->second;
}

ChannelStats FeatureBank::stats(const Manifest& manifest, Split split) const {
  std::vector<Spectrogram> set;
  for (const auto* r : manifest.select(split)) set.push_back(get(r->utt_id));
  return compute_channel_stats(set);
}

std::vector<TrainingPair> stage_pairs(const Manifest& manifest) {
  std::vector<TrainingPair> pairs;
  for (Split split : {Split::train_noisy, Split::train_noisy_aug})
    for (const auto* r : manifest.select(split)) {
      if (!r->paired_clean_id) throw std::invalid_argument("unpaired noisy utterance " + r->utt_id);
      pairs.push_back({r->utt_id, *r->paired_clean_id, r->speaker_id});
    }
  return pairs;
}

void validate_pairs(const Manifest& manifest, const std::vector<TrainingPair>& pairs) {
  for (const auto& p : pairs) {
    const auto& r = manifest.find(p.noisy);
    if (!r.paired_clean_id || *r.paired_clean_id != p.clean)
      throw std::invalid_argument("batch holds " + p.noisy + " without its clean partner (got " + p.clean + ")");
    if (manifest.find(p.clean).speaker_id != r.speaker_id || r.speaker_id != p.speaker)
      throw std::invalid_argument("pair " + p.noisy + "/" + p.clean + " mixes speakers");
  }
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch))
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + static_cast<std::size_t>(batch))));
  return out;
}

}  // namespace

std::vector<std::vector<TrainingPair>> make_pair_batches(const std::vector<TrainingPair>& pairs, int k,
                                                         std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("pair batch size must be >= 1");
  std::vector<std::vector<TrainingPair>> out;
  for (const auto& idx : make_batches(pairs.size(), k, seed)) {
    out.emplace_back();
    for (std::size_t i : idx) out.back().push_back(pairs[i]);
  }
  return out;
}

std::size_t clip_offset(std::size_t frames, std::size_t segment, std::uint64_t seed) {
  if (segment >= frames) return 0;
  return static_cast<std::size_t>(seed % (frames - segment + 1));
}

TrainingLog::TrainingLog(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open log file " + path.string());
}

void TrainingLog::write(const std::string& json_line) {
  lines_.push_back(json_line);
  if (out_.is_open()) {
    out_ << json_line << '\n';
    out_.flush();
  }
}

TrainContext TrainContext::make(const Manifest& manifest, const FeatureBank& bank, std::string config_hash,
                                TrainingLog* log) {
  TrainContext ctx;
  ctx.manifest = &manifest;
  ctx.bank = &bank;
  ctx.noisy_stats = bank.stats(manifest, Split::train_noisy);
  ctx.clean_stats = bank.stats(manifest, Split::train_clean);
  ctx.config_hash = std::move(config_hash);
  ctx.log = log;
  return ctx;
}

// ---------------------------------------------------------------------------
// Losses per example

namespace {

Tensor branch_features(const Enhancer& enhancer, const Spectrogram& x, const TrainContext& ctx,
                       const TrainConfig& cfg) {
  const Tensor x_norm = channel_normalize(x, ctx.noisy_stats, cfg.norm).to_tensor();
  return enhancement_chain(enhancer, x_norm, ctx.clean_stats, cfg.norm);
}

}  // namespace

LossValue pair_loss(System system, const Enhancer& enhancer, const Embedder& embedder, const Spectrogram& noisy,
                    const Spectrogram& clean, int speaker, const TrainContext& ctx, const TrainConfig& cfg) {
  if (noisy.frames() != clean.frames())
    throw ShapeError("pair_loss: noisy and clean segments differ in length");
  LossValue out;
  const EmbedderOutput on = embedder.forward(branch_features(enhancer, noisy, ctx, cfg));
  const Tensor ce_n = cross_entropy(on.logits, speaker);
  out.components["ce_noisy"] = ce_n.item();
  switch (system) {
    case System::a:
      out.total = ce_n;
      break;
    case System::b: {
      const EmbedderOutput ref = embedder.forward(instance_normalize(clean.to_tensor(), cfg.norm));
      out.total = perceptual_original(on.taps, ref.taps, cfg.perceptual);
      out.components["pcptl"] = out.total.item();
      break;
    }
    case System::c:
    case System::d: {
      const EmbedderOutput oc = embedder.forward(branch_features(enhancer, clean, ctx, cfg));
      const Tensor ce_c = cross_entropy(oc.logits, speaker);
      const Tensor pcptl = perceptual_modified(on.taps, oc.taps, cfg.perceptual);
      out.components["ce_clean"] = ce_c.item();
      out.components["pcptl"] = pcptl.item();
      out.total = combined(pcptl, scale(ce_n + ce_c, 0.5), cfg.lambda);
      break;
    }
  }
  out.components["total"] = out.total.item();
  return out;
}


// ---------------------------------------------------------------------------
// Training loop

namespace {

struct Models {
  std::optional<Enhancer> enhancer;
  Embedder embedder;

  Models shadow() const {
    Models m;
    if (enhancer) m.enhancer = enhancer->shadow();
    m.embedder = embedder.shadow();
    return m;
  }

  // Parameters that receive updates, in a fixed order.
  std::vector<Parameter*> trainable() {
    std::vector<Parameter*> out;
    if (enhancer)
      for (auto& p : enhancer->parameters())
        if (p.value.requires_grad()) out.push_back(&p);
    for (auto& p : embedder.parameters())
      if (p.value.requires_grad()) out.push_back(&p);
    return out;
  }
};

using ExampleLoss = std::function<LossValue(const Models&, std::size_t example, std::uint64_t clip_seed)>;

struct LoopResult {
  std::vector<double> epoch_losses;
  std::vector<double> epoch_lrs;
  std::uint64_t steps = 0;
  Optimizer optimizer;
};

struct GroupResult {
  std::vector<std::vector<double>> grads;  // per trainable parameter
  std::map<std::string, double> sums;
  std::vector<double> totals;
};


LoopResult train_loop(Models& models, std::size_t n_examples, const StageConfig& sc, const std::string& tag,
                      const TrainContext& ctx, const TrainConfig& cfg, const ExampleLoss& loss_fn) {
  if (n_examples == 0) throw std::invalid_argument(tag + ": no training examples");
  LoopResult result{{}, {}, 0, Optimizer(OptimizerSpec{sc.optimizer, sc.lr})};
  Optimizer& opt = result.optimizer;
  LrSchedule schedule(sc.lr, cfg.halve_threshold, cfg.max_halvings);
  const std::vector<Parameter*> params = models.trainable();
  std::vector<Parameter> param_list;

  for (int epoch = 1; epoch <= sc.max_epochs; ++epoch) {
    const auto batches = make_batches(n_examples, sc.batch, derive_seed(cfg.seed, tag + "/order",
                                                                        {static_cast<std::uint64_t>(epoch)}));
    double epoch_sum = 0;
    for (const auto& batch : batches) {
      const std::size_t n = batch.size();
      const std::size_t group = static_cast<std::size_t>(cfg.group_size);
      const std::size_t n_groups = (n + group - 1) / group;
      std::vector<GroupResult> results(n_groups);

      std::atomic<std::size_t> next{0};
      std::mutex error_mutex;
      std::exception_ptr error;
      auto work = [&] {
        for (std::size_t g = next++; g < n_groups; g = next++) {
          try {
            Models shadow = models.shadow();
            GroupResult& gr = results[g];
            for (std::size_t j = g * group; j < std::min(n, (g + 1) * group); ++j) {
              const std::size_t ex = batch[j];
              const LossValue lv =
                  loss_fn(shadow, ex, derive_seed(cfg.seed, tag + "/clip", {static_cast<std::uint64_t>(epoch), ex}));
              const double total = lv.total.item();
              if (!std::isfinite(total))
                throw DivergenceError(tag + ": non-finite loss at step " + std::to_string(result.steps + 1));
              for (const auto& [k, v] : lv.components) gr.sums[k] += v;
              gr.totals.push_back(total);
              if (lv.total.requires_grad()) scale(lv.total, 1.0 / static_cast<double>(n)).backward();
            }
            for (const Parameter* p : shadow.trainable()) {
              const auto gsp = p->value.grad();
              gr.grads.emplace_back(gsp.begin(), gsp.end());
              if (gr.grads.back().empty()) gr.grads.back().assign(p->value.numel(), 0.0);
            }
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      };
      std::vector<std::thread> pool;
      for (int i = 1; i < cfg.workers; ++i) pool.emplace_back(work);
      work();
      for (auto& t : pool) t.join();
      if (error) std::rethrow_exception(error);

      // Index-ordered reduction.
      for (Parameter* p : params) p->value.zero_grad();
      std::map<std::string, double> sums;
      double batch_sum = 0;
      for (const auto& gr : results) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.accumulate_grad(gr.grads.at(i));
        for (const auto& [k, v] : gr.sums) sums[k] += v;
        for (double t : gr.totals) batch_sum += t;
      }
      param_list.clear();
      for (Parameter* p : params) param_list.push_back(*p);
      try {
        opt.step(param_list);
      } catch (const DivergenceError& e) {
        throw DivergenceError(tag + ": " + e.what() + " at step " + std::to_string(result.steps + 1));
      }
      ++result.steps;
      epoch_sum += batch_sum;

      if (ctx.log) {
        ordered_json rec;
        rec["type"] = "step";
        rec["stage"] = tag;
        rec["epoch"] = epoch;
        rec["step"] = result.steps;
        rec["lr"] = opt.lr();
        const double dn = static_cast<double>(n);
        rec["total"] = batch_sum / dn;
        rec["pcptl"] = sums.count("pcptl") ? ordered_json(sums["pcptl"] / dn) : ordered_json(nullptr);
        rec["ce_noisy"] = sums.count("ce_noisy") ? ordered_json(sums["ce_noisy"] / dn) : ordered_json(nullptr);
        rec["ce_clean"] = sums.count("ce_clean") ? ordered_json(sums["ce_clean"] / dn) : ordered_json(nullptr);
        ctx.log->write(rec.dump());
      }
    }

    const double epoch_loss = epoch_sum / static_cast<double>(n_examples);
    result.epoch_losses.push_back(epoch_loss);
    result.epoch_lrs.push_back(opt.lr());
    const auto action = schedule.observe(epoch_loss);
    if (ctx.log) {
      ordered_json rec;
      rec["type"] = "epoch";
      rec["stage"] = tag;
      rec["epoch"] = epoch;
      rec["loss"] = epoch_loss;
      rec["lr"] = opt.lr();
      rec["ratio"] = schedule.last_ratio() ? ordered_json(*schedule.last_ratio()) : ordered_json(nullptr);
      rec["action"] = to_string(action);
      rec["halvings"] = schedule.halvings();
      ctx.log->write(rec.dump());
    }
    if (action == LrSchedule::Action::stop) break;
    opt.set_lr(schedule.lr());
  }
  return result;
}

void save_context(Checkpoint& ck, const TrainContext& ctx, const TrainConfig& cfg) {
  ck.put("stats/noisy/mu", {kMelBins}, ctx.noisy_stats.mu);
  ck.put("stats/noisy/sigma", {kMelBins}, ctx.noisy_stats.sigma);
  ck.put("stats/clean/mu", {kMelBins}, ctx.clean_stats.mu);
  ck.put("stats/clean/sigma", {kMelBins}, ctx.clean_stats.sigma);
  ck.put("stats/sigma_power", {1}, {static_cast<double>(cfg.norm.sigma_power)});
}

Checkpoint finish_checkpoint(Stage stage, const Models& models, const LoopResult& loop, const TrainContext& ctx,
                             const TrainConfig& cfg) {
  Checkpoint ck;
  ck.stage = to_string(stage);
  ck.config_hash = ctx.config_hash;
  ck.step = loop.steps;
  if (models.enhancer) models.enhancer->save(ck);
  models.embedder.save(ck);
  save_context(ck, ctx, cfg);
  loop.optimizer.save(ck, "optim");
  ck.put("train/epoch_losses", {loop.epoch_losses.size()}, loop.epoch_losses);
  return ck;
}

Spectrogram clip(const Spectrogram& s, std::size_t segment, std::uint64_t seed) {
  const std::size_t len = std::min(segment, s.frames());
  return s.slice(clip_offset(s.frames(), len, seed), len);
}

StageResult to_result(Models models, Checkpoint ck, LoopResult loop) {
  StageResult r;
  r.enhancer = std::move(models.enhancer);
  r.embedder = std::move(models.embedder);
  r.checkpoint = std::move(ck);
  r.epoch_losses = std::move(loop.epoch_losses);
  r.epoch_lrs = std::move(loop.epoch_lrs);
  r.steps = loop.steps;
  return r;
}

void require_stage(const Checkpoint& ck, Stage expected, Stage running) {
  if (ck.stage != to_string(expected))
    throw std::invalid_argument(to_string(running) + " requires a " + to_string(expected) +
                                " checkpoint, got stage '" + ck.stage + "'");
}

StageResult run_pair_stage(Stage stage, System system, Models models, const TrainContext& ctx,
                           const TrainConfig& cfg) {
  const auto pairs = stage_pairs(*ctx.manifest);
  validate_pairs(*ctx.manifest, pairs);
  const std::size_t seg = static_cast<std::size_t>(cfg.segment_frames);
  const std::string tag = to_string(stage) + (stage == Stage::pretrain2 ? "/" + to_string(system) : "");
  auto loss = [&](const Models& m, std::size_t ex, std::uint64_t clip_seed) {
    const auto& p = pairs[ex];
    const Spectrogram& noisy = ctx.bank->get(p.noisy);
    const Spectrogram& clean = ctx.bank->get(p.clean);
    if (noisy.frames() != clean.frames())
      throw std::invalid_argument("pair " + p.noisy + "/" + p.clean + " differs in length");
    // Same offset on both sides keeps the taps frame-aligned.
    return pair_loss(system, *m.enhancer, m.embedder, clip(noisy, seg, clip_seed), clip(clean, seg, clip_seed),
                     p.speaker, ctx, cfg);
  };
  const std::uint64_t frozen_before = parameter_checksum(models.embedder.parameters());
  LoopResult loop = train_loop(models, pairs.size(), cfg.stage(stage), tag, ctx, cfg, loss);
  if (stage == Stage::pretrain2 && parameter_checksum(models.embedder.parameters()) != frozen_before)
    throw std::logic_error("pretrain2 modified the frozen embedder");
  Checkpoint ck = finish_checkpoint(stage, models, loop, ctx, cfg);
  ck.put("train/system", {1}, {static_cast<double>(static_cast<int>(stage == Stage::finetune ? System::d : system))});
  return to_result(std::move(models), std::move(ck), std::move(loop));
}

}  // namespace

StageResult run_pretrain1(const TrainContext& ctx, const TrainConfig& cfg) {
  cfg.validate();
  const auto utts = ctx.manifest->select(Split::train_clean_aug);
  const auto speakers = ctx.manifest->speakers_in(Split::train_clean_aug);
  EmbedderConfig ecfg = cfg.embedder;
  ecfg.num_speakers = speakers.empty() ? 0 : speakers.back() + 1;
  Models models;
  models.embedder = Embedder(ecfg, derive_seed(cfg.seed, "embedder"));
  const std::size_t seg = static_cast<std::size_t>(cfg.segment_frames);
  auto loss = [&](const Models& m, std::size_t ex, std::uint64_t clip_seed) {
    const auto* r = utts[ex];
    const Spectrogram s = clip(ctx.bank->get(r->utt_id), seg, clip_seed);
    const EmbedderOutput out = m.embedder.forward(instance_normalize(s.to_tensor(), cfg.norm));
    LossValue lv;
    lv.total = cross_entropy(out.logits, r->speaker_id);
    lv.components["ce_clean"] = lv.total.item();
    return lv;
  };
  LoopResult loop = train_loop(models, utts.size(), cfg.pretrain1, "pretrain1", ctx, cfg, loss);
  Checkpoint ck = finish_checkpoint(Stage::pretrain1, models, loop, ctx, cfg);
  return to_result(std::move(models), std::move(ck), std::move(loop));
}

StageResult run_pretrain2(const TrainContext& ctx, const Checkpoint& pretrain1, const TrainConfig& cfg,
                          System system) {
  cfg.validate();
  require_stage(pretrain1, Stage::pretrain1, Stage::pretrain2);
  if (system == System::d) throw std::invalid_argument("system d is produced by finetune, not pretrain2");
  Models models;
  models.embedder = Embedder::load(pretrain1);
  models.embedder.set_trainable(false);
  models.enhancer = Enhancer(cfg.enhancer, derive_seed(cfg.seed, "enhancer"));
  return run_pair_stage(Stage::pretrain2, system, std::move(models), ctx, cfg);
}

StageResult run_finetune(const TrainContext& ctx, const Checkpoint& pretrain2, const TrainConfig& cfg) {
  cfg.validate();
  require_stage(pretrain2, Stage::pretrain2, Stage::finetune);
  Models models;
  models.embedder = Embedder::load(pretrain2);
  models.enhancer = Enhancer::load(pretrain2);
  return run_pair_stage(Stage::finetune, System::d, std::move(models), ctx, cfg);
}

// ---------------------------------------------------------------------------
// Evaluation and ablation

EmbeddingPipeline pipeline_from_checkpoint(const Checkpoint& ck, bool baseline, bool vad) {
  EmbeddingPipeline p;
  p.embedder = Embedder::load(ck);
  if (!baseline) {
    if (!ck.has("enhancer/arch"))
      throw std::invalid_argument("checkpoint (stage " + ck.stage + ") has no enhancer; use the baseline mode");
    p.enhancer = Enhancer::load(ck);
  }
  p.noisy_stats = {ck.get("stats/noisy/mu").values, ck.get("stats/noisy/sigma").values};
  p.clean_stats = {ck.get("stats/clean/mu").values, ck.get("stats/clean/sigma").values};
  p.norm.sigma_power = static_cast<int>(ck.get("stats/sigma_power").values.at(0));
  p.vad = vad;
  return p;
}

SystemReport evaluate_system(const std::string& system_id, const Checkpoint& ck, bool baseline,
                             const Manifest& manifest, const std::filesystem::path& corpus_root,
                             const std::vector<Trial>& trials, const EvalConfig& eval, int workers,
                             const std::filesystem::path& score_dir) {
  const EmbeddingPipeline pipeline = pipeline_from_checkpoint(ck, baseline, eval.vad);
  SystemReport rep;
  rep.system = system_id;
  rep.checkpoint_hash = git_blob_hash(ck.serialize());
  for (Condition c : {Condition::clean, Condition::noisy}) {
    const ScoreSet scores = score_trials(pipeline, manifest, corpus_root, trials, c, workers);
    if (!score_dir.empty()) write_scores(score_dir / (system_id + "_" + to_string(c) + ".scores"), scores);
    rep.metrics[to_string(c)] = {eer(scores), min_dcf(scores, eval.p_target)};
  }
  return rep;
}

const SystemReport& AblationReport::system(const std::string& id) const {
  for (const auto& s : systems)
    if (s.system == id) return s;
  throw std::out_of_range("report has no system '" + id + "'");
}

std::string AblationReport::to_json() const {
  ordered_json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["backend"] = "cosine";
  j["trials"] = trials;
  j["systems"] = ordered_json::array();
  for (const auto& s : systems) {
    ordered_json js;
    js["system"] = s.system;
    js["checkpoint_hash"] = s.checkpoint_hash;
    for (const auto& [cond, m] : s.metrics) {
      js[cond]["eer_percent"] = 100.0 * m.eer;
      js[cond]["min_dcf"] = m.min_dcf;
    }
    j["systems"].push_back(js);
  }
  return j.dump(2) + "\n";
}

AblationReport AblationReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  AblationReport r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trials = j.at("trials").get<std::size_t>();
  for (const auto& js : j.at("systems")) {
    SystemReport s;
    s.system = js.at("system").get<std::string>();
    s.checkpoint_hash = js.at("checkpoint_hash").get<std::string>();
    for (const char* cond : {"clean", "noisy"})
      if (js.contains(cond))
        s.metrics[cond] = {js[cond].at("eer_percent").get<double>() / 100.0, js[cond].at("min_dcf").get<double>()};
    r.systems.push_back(std::move(s));
  }
  return r;
}

std::string AblationReport::to_table() const {
  std::ostringstream os;
  os << "system    clean EER%  clean minDCF  noisy EER%  noisy minDCF\n";
  for (const auto& s : systems) {
    os << std::left << std::setw(10) << s.system << std::right << std::fixed;
    for (const char* cond : {"clean", "noisy"}) {
      auto it = s.metrics.find(cond);
      if (it == s.metrics.end()) {
        os << std::setw(11) << "-" << std::setw(14) << "-";
        continue;
      }
      os << std::setw(11) << std::setprecision(2) << 100 * it->second.eer << std::setw(14) << std::setprecision(4)
         << it->second.min_dcf;
    }
    os << '\n';
  }
  return os.str();
}

AblationReport run_ablation(const Manifest& manifest, const std::filesystem::path& corpus_root,
                            const TrainConfig& cfg, const EvalConfig& eval, const std::string& config_hash,
                            const std::filesystem::path& out_dir) {
  cfg.validate();
  eval.validate();
  std::filesystem::create_directories(out_dir / "scores");
  TrainingLog log(out_dir / "train_log.jsonl");
  const FeatureBank bank = FeatureBank::from_corpus(manifest, corpus_root, cfg.workers);
  const TrainContext ctx = TrainContext::make(manifest, bank, config_hash, &log);

  const StageResult p1 = run_pretrain1(ctx, cfg);
  p1.checkpoint.save(out_dir / "pretrain1.ckpt");
  std::map<std::string, Checkpoint> systems;
  for (System s : {System::a, System::b, System::c}) {
    StageResult r = run_pretrain2(ctx, p1.checkpoint, cfg, s);
    r.checkpoint.save(out_dir / ("system_" + to_string(s) + ".ckpt"));
    systems[to_string(s)] = std::move(r.checkpoint);
  }
  {
    StageResult r = run_finetune(ctx, systems.at("c"), cfg);
    r.checkpoint.save(out_dir / "system_d.ckpt");
    systems["d"] = std::move(r.checkpoint);
  }

  const auto trials = build_trials(manifest, eval.trials_per_speaker, eval.seed);
  write_trials(out_dir / "trials.tsv", trials);
  AblationReport report;
  report.config_hash = config_hash;
  report.seed = cfg.seed;
  report.trials = trials.size();
  report.systems.push_back(
      evaluate_system("baseline", p1.checkpoint, true, manifest, corpus_root, trials, eval, cfg.workers, out_dir / "scores"));
  for (const auto& [id, ck] : systems)
    report.systems.push_back(
        evaluate_system(id, ck, false, manifest, corpus_root, trials, eval, cfg.workers, out_dir / "scores"));
  write_file(out_dir / "report.json", report.to_json());
  return report;
}

}  // namespace nvl
