// core/src/eval.cpp

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

#include "nvl/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "nvl/util.hpp"
#include "nvl/wav.hpp"

namespace nvl {

// ---------------------------------------------------------------------------
// VAD

Waveform energy_vad(const Waveform& w) {
  if (w.size() == 0) throw std::invalid_argument("energy_vad: empty waveform");
  const auto& x = w.samples;
  const std::size_t frames = w.size() < kWindowLength ? 1 : frame_count(w.size());
  std::vector<double> db(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double e = 0;
    const std::size_t end = std::min(x.size(), t * kHopLength + kWindowLength);
    for (std::size_t i = t * kHopLength; i < end; ++i) e += x[i] * x[i];
    db[t] = 10.0 * std::log10(e + 1e-20);
  }
  const double peak = *std::max_element(db.begin(), db.end());
  double mean = 0;
  for (double v : db) mean += v;
  mean /= static_cast<double>(frames);

  std::vector<double> kept;
  kept.reserve(x.size());
  bool any = false;
  for (std::size_t t = 0; t < frames; ++t) {
    const bool silent = db[t] < peak - 40.0 && db[t] < mean;
    // Digital silence has no speech regardless of its neighbours.
    if (silent || db[t] <= -190.0) continue;
    any = true;
    const std::size_t begin = t * kHopLength;
    const std::size_t end = t + 1 == frames ? x.size() : begin + kHopLength;
    kept.insert(kept.end(), x.begin() + static_cast<std::ptrdiff_t>(begin), x.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (!any) throw std::runtime_error("energy_vad: no speech detected");
  return Waveform(std::move(kept), w.sample_rate);
}

// ---------------------------------------------------------------------------
// Trials

std::vector<Trial> build_trials(const Manifest& manifest, int trials_per_speaker, std::uint64_t seed) {
  if (trials_per_speaker < 2) throw std::invalid_argument("build_trials: trials_per_speaker must be >= 2");
  std::map<int, std::vector<std::string>> by_speaker;
  for (const auto* r : manifest.select(Split::test_clean)) by_speaker[r->speaker_id].push_back(r->utt_id);
  if (by_speaker.size() < 2) throw std::invalid_argument("build_trials: need at least 2 test speakers");

  const std::size_t n_target = static_cast<std::size_t>(trials_per_speaker) / 2;
  const std::size_t n_nontarget = static_cast<std::size_t>(trials_per_speaker) - n_target;
  std::vector<Trial> trials;
  std::set<std::pair<std::string, std::string>> seen;
  auto key = [](const std::string& a, const std::string& b) { return a < b ? std::pair{a, b} : std::pair{b, a}; };

  for (const auto& [spk, utts] : by_speaker) {
    std::mt19937_64 rng(derive_seed(seed, "trials", {static_cast<std::uint64_t>(spk)}));
    const std::size_t n = utts.size();
    if (n < 2 || n * (n - 1) / 2 < n_target)
      throw std::invalid_argument("build_trials: speaker " + std::to_string(spk) + " has " + std::to_string(n) +
                                  " utterances, too few for " + std::to_string(n_target) + " target trials");
    // Targets: a seeded shuffle of all distinct pairs.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    for (std::size_t p = 0; p < n_target; ++p) {
      auto [i, j] = pairs[p];
      if (rng() & 1) std::swap(i, j);
      seen.insert(key(utts[i], utts[j]));
      trials.push_back({utts[i], utts[j], true});
    }
    // Nontargets: enroll from this speaker, test from any other.
    std::vector<const std::string*> others;
    for (const auto& [other, ou] : by_speaker)
      if (other != spk)
        for (const auto& u : ou) others.push_back(&u);
    if (n * others.size() < n_nontarget)
      throw std::invalid_argument("build_trials: too few utterances for nontarget trials");
    std::size_t made = 0, attempts = 0;
    while (made < n_nontarget) {
      if (++attempts > 1000 * n_nontarget)
        throw std::invalid_argument("build_trials: cannot draw enough distinct nontarget trials");
      const std::string& e = utts[rng() % n];
      const std::string& t = *others[rng() % others.size()];
      if (!seen.insert(key(e, t)).second) continue;
      trials.push_back({e, t, false});
      ++made;
    }
  }
  return trials;
}

// ---------------------------------------------------------------------------
// Metrics

void ScoreSet::validate() const {
  if (trials.size() != scores.size()) throw std::invalid_argument("score set: trial and score counts differ");
  bool tgt = false, non = false;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!std::isfinite(scores[i])) throw std::invalid_argument("score set: non-finite score");
    (trials[i].target ? tgt : non) = true;
  }
  if (!tgt || !non) throw std::invalid_argument("score set: need at least one target and one nontarget trial");
}

std::vector<double> ScoreSet::target_scores() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < trials.size(); ++i)
    if (trials[i].target) out.push_back(scores[i]);
  return out;
}

std::vector<double> ScoreSet::nontarget_scores() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < trials.size(); ++i)
    if (!trials[i].target) out.push_back(scores[i]);
  return out;
}

namespace {

struct OperatingPoint {
  double p_miss;
  double p_fa;
};

// Operating points from accept-all to reject-all, one per gap between
// distinct scores.
std::vector<OperatingPoint> sweep(std::span<const double> targets, std::span<const double> nontargets) {
  if (targets.empty() || nontargets.empty())
    throw std::invalid_argument("metric: need at least one target and one nontarget score");
  std::vector<std::pair<double, bool>> all;
  all.reserve(targets.size() + nontargets.size());
  for (double s : targets) {
    if (!std::isfinite(s)) throw std::invalid_argument("metric: non-finite score");
    all.emplace_back(s, true);
  }
  for (double s : nontargets) {
    if (!std::isfinite(s)) throw std::invalid_argument("metric: non-finite score");
    all.emplace_back(s, false);
  }
  std::sort(all.begin(), all.end());
  const double nt = static_cast<double>(targets.size()), nn = static_cast<double>(nontargets.size());
  std::size_t miss = 0, fa = nontargets.size();
  std::vector<OperatingPoint> points{{0.0, 1.0}};
  for (std::size_t i = 0; i < all.size();) {
    const double v = all[i].first;
    for (; i < all.size() && all[i].first == v; ++i) {
      if (all[i].second)
        ++miss;
      else
        --fa;
    }
    points.push_back({static_cast<double>(miss) / nt, static_cast<double>(fa) / nn});
  }
  return points;
}

}  // namespace

double eer(std::span<const double> targets, std::span<const double> nontargets) {
  const auto points = sweep(targets, nontargets);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto [m1, f1] = points[i];
    if (m1 < f1) continue;
    const auto [m0, f0] = points[i - 1];
    const double t = (f0 - m0) / ((f0 - m0) + (m1 - f1));
    return m0 + t * (m1 - m0);
  }
  return 1.0;  // unreachable: the last point is (1, 0)
}

double eer(const ScoreSet& s) {
  s.validate();
  return eer(s.target_scores(), s.nontarget_scores());
}

double min_dcf(std::span<const double> targets, std::span<const double> nontargets, double p_target) {
  if (!(p_target > 0 && p_target < 1)) throw std::invalid_argument("min_dcf: p_target must lie in (0, 1)");
  const double norm = std::min(p_target, 1 - p_target);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [m, f] : sweep(targets, nontargets))
    best = std::min(best, (p_target * m + (1 - p_target) * f) / norm);
  return best;
}

double min_dcf(const ScoreSet& s, double p_target) {
  s.validate();
  return min_dcf(s.target_scores(), s.nontarget_scores(), p_target);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("cosine_similarity: vectors differ in length");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

std::string to_string(Condition c) { return c == Condition::clean ? "clean" : "noisy"; }

Condition parse_condition(const std::string& s) {
  if (s == "clean") return Condition::clean;
  if (s == "noisy") return Condition::noisy;
  throw std::invalid_argument("unknown condition '" + s + "' (expected clean or noisy)");
}

// ---------------------------------------------------------------------------
// Scoring

Spectrogram EmbeddingPipeline::features(const Spectrogram& x) const {
  NoGradGuard guard;
  if (!enhancer) return instance_normalize(x, norm);
  const Tensor x_norm = channel_normalize(x, noisy_stats, norm).to_tensor();
  return Spectrogram::from_tensor(enhancement_chain(*enhancer, x_norm, clean_stats, norm));
}

std::vector<double> EmbeddingPipeline::embed(const Waveform& w) const {
  NoGradGuard guard;
  const Spectrogram x = logmel(vad ? energy_vad(w) : w);
  const Tensor e = embedder.forward(features(x).to_tensor()).embedding;
  return {e.data().begin(), e.data().end()};
}

ScoreSet score_trials(const EmbeddingPipeline& pipeline, const Manifest& manifest,
                      const std::filesystem::path& corpus_root, const std::vector<Trial>& trials,
                      Condition condition, int workers) {
  std::map<std::string, std::string> noisy_of;
  for (const auto* r : manifest.select(Split::test_noisy))
    if (r->paired_clean_id) noisy_of[*r->paired_clean_id] = r->utt_id;
  if (condition == Condition::noisy && noisy_of.empty())
    throw std::invalid_argument("evaluate: manifest has no test_noisy split for the noisy condition");

  auto resolve = [&](const std::string& id) -> std::string {
    if (condition == Condition::clean) return id;
    auto it = noisy_of.find(id);
    if (it == noisy_of.end()) throw std::invalid_argument("evaluate: no noisy counterpart for " + id);
    return it->second;
  };

  std::vector<std::string> needed;
  {
    std::set<std::string> ids;
    for (const auto& t : trials) {
      ids.insert(resolve(t.enroll));
      ids.insert(resolve(t.test));
    }
    needed.assign(ids.begin(), ids.end());
  }

  std::vector<std::vector<double>> emb(needed.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&] {
    for (std::size_t i = next++; i < needed.size(); i = next++) {
      try {
        const auto& rec = manifest.find(needed[i]);
        const auto path = corpus_root / rec.path;
        if (!std::filesystem::exists(path)) throw std::runtime_error("evaluate: missing audio file " + path.string());
        emb[i] = pipeline.embed(read_wav(path));
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

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < needed.size(); ++i) index[needed[i]] = i;
  ScoreSet out;
  out.trials = trials;
  for (const auto& t : trials)
    out.scores.push_back(cosine_similarity(emb[index.at(resolve(t.enroll))], emb[index.at(resolve(t.test))]));
  return out;
}

// ---------------------------------------------------------------------------
// Files

void write_trials(const std::filesystem::path& path, const std::vector<Trial>& trials) {
  std::ostringstream os;
  for (const auto& t : trials) os << t.enroll << '\t' << t.test << '\t' << (t.target ? "target" : "nontarget") << '\n';
  write_file(path, os.str());
}

std::vector<Trial> read_trials(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Trial> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Trial t;
    std::string label;
    if (!std::getline(fields, t.enroll, '\t') || !std::getline(fields, t.test, '\t') || !std::getline(fields, label) ||
        (label != "target" && label != "nontarget"))
      throw IntegrityError("trials line " + std::to_string(lineno) + ": expected enroll<TAB>test<TAB>target|nontarget");
    t.target = label == "target";
    out.push_back(std::move(t));
  }
  return out;
}

void write_scores(const std::filesystem::path& path, const ScoreSet& s) {
  std::ostringstream os;
  for (std::size_t i = 0; i < s.trials.size(); ++i)
    os << s.trials[i].enroll << '\t' << s.trials[i].test << '\t' << format_double(s.scores[i]) << '\n';
  write_file(path, os.str());
}

}  // namespace nvl
