// tools/src/cli.cpp

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

#include "nvl/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "nvl/config.hpp"
#include "nvl/corpus.hpp"
#include "nvl/eval.hpp"
#include "nvl/optim.hpp"
#include "nvl/trainer.hpp"
#include "nvl/util.hpp"
#include "nvl/wav.hpp"

namespace fs = std::filesystem;

namespace nvl::cli {

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (c.seed) {
    cfg.set_seed(*c.seed);
  } else if (!cfg.seed_given) {
    if (const char* env = std::getenv("NVL_SEED"); env && *env) cfg.set("run.seed", env);
  }
  cfg.validate();
  return cfg;
}

void guard(const fs::path& p, bool force) {
  if (fs::exists(p) && !force)
    throw UsageError(p.string() + " already exists; pass --force to overwrite");
}

Manifest read_corpus(const fs::path& root) {
  const fs::path m = root / "manifest.tsv";
  if (!fs::exists(m)) throw UsageError("no corpus at " + root.string() + " (missing manifest.tsv)");
  return Manifest::read(m);
}

void require_enhancer(const Checkpoint& ck, bool baseline) {
  if (!baseline && !ck.has("enhancer/arch"))
    throw UsageError("checkpoint of stage " + ck.stage + " has no enhancer; pass --baseline");
}

Checkpoint load_stage(const fs::path& p, Stage expected, Stage running) {
  if (p.empty() || !fs::exists(p))
    throw UsageError("stage " + to_string(running) + " requires a " + to_string(expected) +
                     " checkpoint (--checkpoint)");
  Checkpoint ck = Checkpoint::load(p);
  if (ck.stage != to_string(expected))
    throw UsageError("stage " + to_string(running) + " requires a " + to_string(expected) + " checkpoint; " +
                     p.string() + " is stage '" + ck.stage + "'");
  return ck;
}

// ---------------------------------------------------------------------------

struct GenCorpusArgs {
  Common common;
  std::string out;
};

int gen_corpus(const GenCorpusArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.common);
  const fs::path root(a.out);
  guard(root / "manifest.tsv", a.common.force);
  if (a.common.force) fs::remove_all(root / "wav");
  fs::create_directories(root);
  const CorpusRecipe recipe(cfg.corpus);
  write_corpus(recipe, root, cfg.workers);
  write_file(root / "config.resolved", cfg.canonical_text());

  const Manifest& m = recipe.manifest();
  out << "records=" << m.records.size() << " speakers=" << m.speaker_count << " config_hash=" << m.config_hash
      << "\n";
  for (Split s : {Split::train_clean, Split::train_clean_aug, Split::train_noisy, Split::train_noisy_aug,
                  Split::test_clean, Split::test_noisy})
    out << to_string(s) << "=" << m.select(s).size() << "\n";
  return kOk;
}

struct TrainArgs {
  Common common;
  std::string stage, corpus, out, ablation, checkpoint;
};

int train(const TrainArgs& a, std::ostream& out) {
  const Stage stage = parse_stage(a.stage);
  if (!a.ablation.empty() && stage != Stage::pretrain2)
    throw UsageError("--ablation only applies to stage pretrain2");
  const System system = a.ablation.empty() ? System::c : parse_system(a.ablation);
  if (system == System::d) throw UsageError("system d is produced by stage finetune");

  const RunConfig cfg = resolve(a.common);
  const fs::path dir(a.out);
  std::string stem = to_string(stage);
  if (stage == Stage::pretrain2) stem += "_" + to_string(system);

  // Prerequisites are checked before any work is done.
  std::optional<Checkpoint> prior;
  if (stage == Stage::pretrain2)
    prior = load_stage(a.checkpoint.empty() ? dir / "pretrain1.ckpt" : fs::path(a.checkpoint), Stage::pretrain1,
                       stage);
  if (stage == Stage::finetune)
    prior = load_stage(a.checkpoint.empty() ? dir / "pretrain2_c.ckpt" : fs::path(a.checkpoint), Stage::pretrain2,
                       stage);

  const fs::path ck_path = dir / (stem + ".ckpt");
  guard(ck_path, a.common.force);
  const Manifest manifest = read_corpus(a.corpus);
  fs::create_directories(dir);
  write_file(dir / (stem + ".config"), cfg.canonical_text());

  TrainingLog log(dir / (stem + ".log.jsonl"));
  const FeatureBank bank = FeatureBank::from_corpus(manifest, a.corpus, cfg.workers);
  const TrainContext ctx = TrainContext::make(manifest, bank, cfg.hash(), &log);
  StageResult r = stage == Stage::pretrain1   ? run_pretrain1(ctx, cfg.train)
                  : stage == Stage::pretrain2 ? run_pretrain2(ctx, *prior, cfg.train, system)
                                              : run_finetune(ctx, *prior, cfg.train);
  r.checkpoint.save(ck_path);
  out << "stage=" << stem << " epochs=" << r.epoch_losses.size() << " steps=" << r.steps
      << " final_loss=" << (r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back()) << " checkpoint=" << ck_path.string()
      << "\n";
  return kOk;
}

struct EvaluateArgs {
  Common common;
  std::string checkpoint, corpus, out, condition = "both", trials, name;
  bool baseline = false;
};

int evaluate(const EvaluateArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.common);
  if (!fs::exists(a.checkpoint)) throw UsageError("checkpoint " + a.checkpoint + " does not exist");
  const Manifest manifest = read_corpus(a.corpus);
  std::vector<Condition> conditions;
  if (a.condition == "both")
    conditions = {Condition::clean, Condition::noisy};
  else
    conditions = {parse_condition(a.condition)};
  for (Condition c : conditions) {
    const Split need = c == Condition::clean ? Split::test_clean : Split::test_noisy;
    if (manifest.select(need).empty())
      throw UsageError("condition " + to_string(c) + " needs a " + to_string(need) + " split in the manifest");
  }

  const fs::path dir(a.out);
  guard(dir / "report.json", a.common.force);
  const Checkpoint ck = Checkpoint::load(a.checkpoint);
  require_enhancer(ck, a.baseline);
  std::vector<Trial> trials;
  if (a.trials.empty()) {
    trials = build_trials(manifest, cfg.eval.trials_per_speaker, cfg.eval.seed);
  } else {
    if (!fs::exists(a.trials)) throw UsageError("trials file " + a.trials + " does not exist");
    trials = read_trials(a.trials);
  }
  fs::create_directories(dir);
  write_file(dir / "config.resolved", cfg.canonical_text());
  write_trials(dir / "trials.tsv", trials);

  const EmbeddingPipeline pipeline = pipeline_from_checkpoint(ck, a.baseline, cfg.eval.vad);
  SystemReport sys;
  sys.system = !a.name.empty() ? a.name : a.baseline ? "baseline" : ck.stage;
  sys.checkpoint_hash = git_blob_hash(ck.serialize());
  for (Condition c : conditions) {
    const ScoreSet scores = score_trials(pipeline, manifest, a.corpus, trials, c, cfg.workers);
    write_scores(dir / (to_string(c) + ".scores"), scores);
    sys.metrics[to_string(c)] = {eer(scores), min_dcf(scores, cfg.eval.p_target)};
  }
  AblationReport report;
  report.config_hash = ck.config_hash;
  report.seed = cfg.seed;
  report.trials = trials.size();
  report.systems.push_back(sys);
  write_file(dir / "report.json", report.to_json());
  out << report.to_table();
  return kOk;
}

struct ExtractArgs {
  Common common;
  std::string checkpoint, wav, out;
  bool baseline = false;
};

int extract(const ExtractArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.common);
  if (!fs::exists(a.checkpoint)) throw UsageError("checkpoint " + a.checkpoint + " does not exist");
  if (!a.out.empty()) guard(a.out, a.common.force);
  const Checkpoint ck = Checkpoint::load(a.checkpoint);
  require_enhancer(ck, a.baseline);
  const Waveform w = read_wav(a.wav);
  const EmbeddingPipeline pipeline = pipeline_from_checkpoint(ck, a.baseline, cfg.eval.vad);
  const std::vector<double> e = pipeline.embed(w);
  std::string text;
  for (double v : e) text += format_double(v) + "\n";
  if (a.out.empty())
    out << text;
  else
    write_file(a.out, text);
  return kOk;
}

struct AblateArgs {
  Common common;
  std::string corpus, out;
};

int ablate(const AblateArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.common);
  const fs::path dir(a.out);
  guard(dir / "report.json", a.common.force);
  const Manifest manifest = read_corpus(a.corpus);
  fs::create_directories(dir);
  write_file(dir / "config.resolved", cfg.canonical_text());
  const AblationReport report = run_ablation(manifest, a.corpus, cfg.train, cfg.eval, cfg.hash(), dir);
  out << report.to_table();
  return kOk;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string format = "table";
};

int report(const ReportArgs& a, std::ostream& out) {
  std::vector<AblationReport> reports;
  for (const auto& p : a.inputs) {
    if (!fs::exists(p)) throw UsageError("report " + p + " does not exist");
    reports.push_back(AblationReport::from_json(read_file(p)));
  }
  if (a.format == "json") {
    for (const auto& r : reports) out << r.to_json();
    return kOk;
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports.size() > 1) out << "# " << a.inputs[i] << " (seed " << reports[i].seed << ")\n";
    out << "backend=cosine config_hash=" << reports[i].config_hash << " trials=" << reports[i].trials << "\n";
    out << reports[i].to_table();
  }
  if (reports.size() > 1) {
    // Mean over reports for systems present in all of them.
    AblationReport mean = reports.front();
    for (auto& sys : mean.systems) {
      for (auto& [cond, m] : sys.metrics) {
        double e = 0, d = 0;
        for (const auto& r : reports) {
          const auto& o = r.system(sys.system).metrics.at(cond);
          e += o.eer;
          d += o.min_dcf;
        }
        m = {e / reports.size(), d / reports.size()};
      }
    }
    out << "# mean over " << reports.size() << " reports\n" << mean.to_table();
  }
  return kOk;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int fail(std::ostream& err, const char* kind, const std::string& msg, int code) {
  err << "nvl: error: kind=" << kind << " message=" << one_line(msg) << "\n";
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"nvl: noise-robust speaker embedding toolkit", "nvl"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "run configuration (key = value lines)")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "seed for all randomness (fallback: NVL_SEED, then run.seed)");
    sub->add_flag("--force", c.force, "overwrite existing outputs");
  };

  GenCorpusArgs gc;
  auto* s_gc = app.add_subcommand("gen-corpus", "synthesize the corpus: audio tree and manifest");
  add_common(s_gc, gc.common);
  s_gc->add_option("--out", gc.out, "corpus directory")->required();

  TrainArgs tr;
  auto* s_tr = app.add_subcommand("train", "run one training stage");
  add_common(s_tr, tr.common);
  s_tr->add_option("--stage", tr.stage, "pretrain1 | pretrain2 | finetune")
      ->required()
      ->check(CLI::IsMember({"pretrain1", "pretrain2", "finetune"}));
  s_tr->add_option("--corpus", tr.corpus, "corpus directory")->required();
  s_tr->add_option("--out", tr.out, "output directory")->required();
  s_tr->add_option("--ablation", tr.ablation, "pretrain2 loss: a | b | c (default c)")
      ->check(CLI::IsMember({"a", "b", "c"}));
  s_tr->add_option("--checkpoint", tr.checkpoint, "checkpoint of the previous stage");

  EvaluateArgs ev;
  auto* s_ev = app.add_subcommand("evaluate", "score trials and report EER / minDCF");
  add_common(s_ev, ev.common);
  s_ev->add_option("--checkpoint", ev.checkpoint, "checkpoint to evaluate")->required();
  s_ev->add_option("--corpus", ev.corpus, "corpus directory")->required();
  s_ev->add_option("--out", ev.out, "output directory")->required();
  s_ev->add_option("--condition", ev.condition, "clean | noisy | both")
      ->check(CLI::IsMember({"clean", "noisy", "both"}));
  s_ev->add_option("--trials", ev.trials, "trial list (default: generated from the seed)");
  s_ev->add_option("--name", ev.name, "system label in the report");
  s_ev->add_flag("--baseline", ev.baseline, "bypass the enhancer");

  ExtractArgs ex;
  auto* s_ex = app.add_subcommand("extract", "write the embedding of one wav file");
  add_common(s_ex, ex.common);
  s_ex->add_option("--checkpoint", ex.checkpoint, "checkpoint")->required();
  s_ex->add_option("--wav", ex.wav, "16 kHz mono wav")->required();
  s_ex->add_option("--out", ex.out, "output file (default: stdout)");
  s_ex->add_flag("--baseline", ex.baseline, "bypass the enhancer");

  AblateArgs ab;
  auto* s_ab = app.add_subcommand("ablate", "train all stages and systems, evaluate, write report.json");
  add_common(s_ab, ab.common);
  s_ab->add_option("--corpus", ab.corpus, "corpus directory")->required();
  s_ab->add_option("--out", ab.out, "output directory")->required();

  ReportArgs rp;
  auto* s_rp = app.add_subcommand("report", "print one or more report.json files; several are also averaged");
  s_rp->add_option("--in", rp.inputs, "report.json (repeatable)")->required();
  s_rp->add_option("--format", rp.format, "table | json")->check(CLI::IsMember({"table", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, "usage", e.what(), kValidation);
  }

  try {
    if (s_gc->parsed()) return gen_corpus(gc, out);
    if (s_tr->parsed()) return train(tr, out);
    if (s_ev->parsed()) return evaluate(ev, out);
    if (s_ex->parsed()) return extract(ex, out);
    if (s_ab->parsed()) return ablate(ab, out);
    if (s_rp->parsed()) return report(rp, out);
    return fail(err, "usage", "no command", kValidation);
  } catch (const ValidationError& e) {
    return fail(err, "validation", e.what(), kValidation);
  } catch (const UsageError& e) {
    return fail(err, "usage", e.what(), kValidation);
  } catch (const IntegrityError& e) {
    return fail(err, "integrity", e.what(), kRuntime);
  } catch (const DivergenceError& e) {
    return fail(err, "divergence", e.what(), kRuntime);
  } catch (const std::exception& e) {
    return fail(err, "runtime", e.what(), kRuntime);
  }
}

}  // namespace nvl::cli
