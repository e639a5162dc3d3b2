// core/src/corpus.cpp

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

#include "nvl/corpus.hpp"

#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "fftw_lock.hpp"
#include "nvl/util.hpp"
#include "nvl/wav.hpp"

namespace nvl {

namespace {

constexpr double kPi = std::numbers::pi;
// Babble voices are drawn from ids no corpus can reach.
constexpr int kBabbleSpeakerBase = 1'000'000;
// Background floor under synthesized speech, relative to the speech level.
constexpr double kSpeechFloorDb = -50.0;

std::size_t duration_samples(double duration_s) {
  return static_cast<std::size_t>(std::llround(duration_s * kSampleRate));
}

double mean_square(std::span<const double> x) {
  double s = 0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

void normalize_rms(std::vector<double>& x, double target_rms) {
  const double rms = std::sqrt(mean_square(x));
  if (rms > 0)
    for (double& v : x) v *= target_rms / rms;
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : std::invalid_argument("invalid configuration: " + join(violations, "; ")), violations_(std::move(violations)) {}

// ---------------------------------------------------------------------------
// Speakers

SpeakerModel SpeakerModel::generate(int speaker_id, std::uint64_t seed) {
  SpeakerModel spk;
  spk.speaker_id = speaker_id;
  spk.seed = derive_seed(seed, "speaker", {static_cast<std::uint64_t>(speaker_id)});
  std::mt19937_64 rng(spk.seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  const double f0_center = std::exp(uniform(std::log(90.0), std::log(260.0)));
  spk.f0_min_hz = std::max(80.0, f0_center * 0.85);
  spk.f0_max_hz = std::min(400.0, f0_center * 1.15);

  // One resonance per band, loosely formant-like.
  static constexpr double kBands[5][2] = {{250, 900}, {900, 2000}, {2000, 3000}, {3000, 4200}, {4200, 6000}};
  const int dominant = static_cast<int>(rng() % 3);
  for (int k = 0; k < 5; ++k) {
    Resonance r;
    r.center_hz = uniform(kBands[k][0], kBands[k][1]);
    r.bandwidth_hz = uniform(60.0, 200.0) * (1.0 + 0.15 * k);
    r.gain = k == dominant ? 1.0 : uniform(0.3, 0.8);
    spk.envelope.push_back(r);
  }
  // Vowels re-weight the other resonances over a ~26 dB range.
  for (int v = 0; v < 6; ++v) {
    std::vector<double> w(5, 1.0);
    for (int k = 0; k < 5; ++k)
      if (k != dominant) w[k] = std::exp(uniform(std::log(0.05), 0.0));
    spk.vowels.push_back(std::move(w));
  }
  return spk;
}

void SpeakerModel::validate() const {
  std::vector<std::string> errors;
  if (f0_min_hz < 80.0 || f0_max_hz > 400.0 || f0_min_hz >= f0_max_hz)
    errors.push_back("speaker " + std::to_string(speaker_id) + ": f0 range outside [80, 400] Hz");
  if (envelope.size() < 2) errors.push_back("speaker " + std::to_string(speaker_id) + ": fewer than 2 resonances");
  if (vowels.empty()) errors.push_back("speaker " + std::to_string(speaker_id) + ": no vowels");
  for (const auto& v : vowels)
    if (v.size() != envelope.size() || std::any_of(v.begin(), v.end(), [](double x) { return !(x > 0 && x <= 1); }))
      errors.push_back("speaker " + std::to_string(speaker_id) + ": invalid vowel weights");
  for (const auto& r : envelope)
    if (!(r.center_hz > 0 && r.center_hz < kSampleRate / 2.0 && r.bandwidth_hz > 0 && r.gain > 0))
      errors.push_back("speaker " + std::to_string(speaker_id) + ": invalid resonance");
  if (!errors.empty()) throw ValidationError(errors);
}

const Resonance& SpeakerModel::strongest() const {
  return *std::max_element(envelope.begin(), envelope.end(),
                           [](const Resonance& a, const Resonance& b) { return a.gain < b.gain; });
}

Waveform synth_utterance(const SpeakerModel& spk, double duration_s, std::uint64_t seed) {
  spk.validate();
  if (duration_s < 1.0) throw std::invalid_argument("synth_utterance: duration must be at least 1 s");
  const std::size_t n = duration_samples(duration_s);
  std::mt19937_64 rng(derive_seed(spk.seed, {seed}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  // Glottal pulse train; pitch performs a reflected random walk in log f0
  // every 5 ms.
  std::vector<double> excitation(n, 0.0);
  const double log_lo = std::log(spk.f0_min_hz), log_hi = std::log(spk.f0_max_hz);
  double log_f0 = uniform(log_lo, log_hi);
  double phase = uniform(0.0, 1.0);
  const std::size_t pitch_block = kSampleRate / 200;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % pitch_block == 0) {
      log_f0 += 0.01 * gauss(rng);
      if (log_f0 < log_lo) log_f0 = 2 * log_lo - log_f0;
      if (log_f0 > log_hi) log_f0 = 2 * log_hi - log_f0;
    }
    phase += std::exp(log_f0) / kSampleRate;
    if (phase >= 1.0) {
      phase -= 1.0;
      excitation[i] = 1.0;
    }
    excitation[i] += 0.01 * gauss(rng);
  }

  // Connected syllables: short dips ~14 dB below the syllable peaks, then a
  // flat-topped body with 30 ms cosine ramps voicing one of the speaker's
  // vowels.  The dip already carries the coming vowel.
  const std::size_t nres = spk.envelope.size();
  constexpr double kDipLevel = 0.2;
  const double ramp = static_cast<double>(duration_samples(0.03));
  std::vector<double> envelope(n, kDipLevel);
  std::vector<std::vector<double>> weight(nres, std::vector<double>(n, 1.0));
  std::size_t pos = 0;
  while (pos < n) {
    const std::size_t dip = duration_samples(uniform(0.02, 0.08));
    const std::size_t len = duration_samples(uniform(0.12, 0.32));
    const double level = uniform(0.5, 1.0);
    const auto& w = spk.vowels[rng() % spk.vowels.size()];
    for (std::size_t i = 0; i < dip + len && pos + i < n; ++i) {
      for (std::size_t k = 0; k < nres; ++k) weight[k][pos + i] = w[k];
      if (i < dip) continue;
      const double j = static_cast<double>(i - dip);
      const double x = std::min({1.0, j / ramp, (static_cast<double>(len) - 1 - j) / ramp});
      envelope[pos + i] = kDipLevel + (level - kDipLevel) * 0.5 * (1.0 - std::cos(kPi * x));
    }
    pos += dip + len;
  }

  // Parallel two-pole resonators, each scaled to its gain at the center.
  std::vector<double> speech(n, 0.0);
  for (std::size_t k = 0; k < nres; ++k) {
    const Resonance& res = spk.envelope[k];
    const double r = std::exp(-kPi * res.bandwidth_hz / kSampleRate);
    const double theta = 2 * kPi * res.center_hz / kSampleRate;
    const double a1 = 2 * r * std::cos(theta), a2 = -r * r;
    const std::complex<double> z = std::polar(1.0, -theta);
    const double peak = 1.0 / std::abs(1.0 - a1 * z - a2 * z * z);
    const double b0 = res.gain / peak;
    double y1 = 0, y2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = b0 * weight[k][i] * excitation[i] + a1 * y1 + a2 * y2;
      speech[i] += y;
      y2 = y1;
      y1 = y;
    }
  }

  for (std::size_t i = 0; i < n; ++i) speech[i] *= envelope[i];
  normalize_rms(speech, kSpeechRms);

  const double floor_rms = kSpeechRms * std::pow(10.0, kSpeechFloorDb / 20.0);
  for (double& v : speech) v += floor_rms * gauss(rng);
  return Waveform(std::move(speech));
}

// ---------------------------------------------------------------------------
// Noise

namespace {

std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  std::normal_distribution<double> gauss(0.0, 1.0);
  fftw_complex* spectrum = fftw_alloc_complex(m / 2 + 1);
  double* signal = fftw_alloc_real(m);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(internal::fftw_planner_mutex());
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(m), spectrum, signal, FFTW_ESTIMATE);
  }
  // Amplitude ~ f^(-1/2) gives power ~ 1/f: -3 dB per octave.
  spectrum[0][0] = spectrum[0][1] = 0.0;
  for (std::size_t k = 1; k <= m / 2; ++k) {
    const double amp = 1.0 / std::sqrt(static_cast<double>(k));
    spectrum[k][0] = amp * gauss(rng);
    spectrum[k][1] = k == m / 2 ? 0.0 : amp * gauss(rng);
  }
  fftw_execute(plan);
  std::vector<double> out(signal, signal + n);
  {
    std::lock_guard<std::mutex> lock(internal::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(spectrum);
  fftw_free(signal);
  return out;
}

}  // namespace

Waveform synth_noise(NoiseKind kind, double duration_s, std::uint64_t seed) {
  const std::size_t n = duration_samples(duration_s);
  if (n == 0) throw std::invalid_argument("synth_noise: empty duration");
  std::mt19937_64 rng(derive_seed(seed, "noise", {static_cast<std::uint64_t>(kind)}));
  std::vector<double> x(n, 0.0);
  switch (kind) {
    case NoiseKind::white: {
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (double& v : x) v = gauss(rng);
      break;
    }
    case NoiseKind::pink:
      x = pink_noise(n, rng);
      break;
    case NoiseKind::tonal: {
      std::uniform_real_distribution<double> freq(200.0, 3000.0), amp(0.5, 1.0), ph(0.0, 2 * kPi);
      for (int tone = 0; tone < 3; ++tone) {
        const double f = freq(rng), a = amp(rng), p = ph(rng);
        for (std::size_t i = 0; i < n; ++i) x[i] += a * std::sin(2 * kPi * f * static_cast<double>(i) / kSampleRate + p);
      }
      break;
    }
    case NoiseKind::babble: {
      for (int voice = 0; voice < 4; ++voice) {
        const int id = kBabbleSpeakerBase + static_cast<int>(rng() % 1'000'000);
        const SpeakerModel spk = SpeakerModel::generate(id, rng());
        const Waveform w = synth_utterance(spk, std::max(duration_s, 1.0), rng());
        for (std::size_t i = 0; i < n; ++i) x[i] += w.samples[i];
      }
      break;
    }
  }
  normalize_rms(x, 1.0);
  return Waveform(std::move(x));
}

double snr_noise_gain(const Waveform& clean, const Waveform& noise, double snr_db) {
  if (noise.size() < clean.size())
    throw std::invalid_argument("mix_at_snr: noise has " + std::to_string(noise.size()) + " samples, clean has " +
                                std::to_string(clean.size()));
  if (clean.size() == 0) throw std::invalid_argument("mix_at_snr: empty clean signal");
  const double p_clean = mean_square(clean.samples);
  if (!(p_clean > 0)) throw std::invalid_argument("mix_at_snr: clean signal is silent");
  const double p_noise = mean_square(std::span<const double>(noise.samples).first(clean.size()));
  if (!(p_noise > 0)) throw std::invalid_argument("mix_at_snr: noise is silent over the clean support");
  return std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db) {
  const double alpha = snr_noise_gain(clean, noise, snr_db);
  std::vector<double> out(clean.samples);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * noise.samples[i];
  return Waveform(std::move(out));
}

double measured_snr_db(const Waveform& clean, const Waveform& added) {
  const std::size_t n = std::min(clean.size(), added.size());
  return 10.0 * std::log10(mean_square(std::span<const double>(clean.samples).first(n)) /
                           mean_square(std::span<const double>(added.samples).first(n)));
}

// ---------------------------------------------------------------------------
// Names

std::string to_string(Split s) {
  switch (s) {
    case Split::train_clean: return "train_clean";
    case Split::train_clean_aug: return "train_clean_aug";
    case Split::train_noisy: return "train_noisy";
    case Split::train_noisy_aug: return "train_noisy_aug";
    case Split::test_clean: return "test_clean";
    case Split::test_noisy: return "test_noisy";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  for (Split v : {Split::train_clean, Split::train_clean_aug, Split::train_noisy, Split::train_noisy_aug,
                  Split::test_clean, Split::test_noisy})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::white: return "white";
    case NoiseKind::pink: return "pink";
    case NoiseKind::tonal: return "tonal";
    case NoiseKind::babble: return "babble";
  }
  return "?";
}

NoiseKind parse_noise_kind(const std::string& s) {
  for (NoiseKind k : {NoiseKind::white, NoiseKind::pink, NoiseKind::tonal, NoiseKind::babble})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown noise kind '" + s + "'");
}

bool split_has_snr(Split s) { return s != Split::train_clean && s != Split::test_clean; }
bool is_train_split(Split s) { return s != Split::test_clean && s != Split::test_noisy; }

// ---------------------------------------------------------------------------
// Manifest

const UtteranceRecord* Manifest::try_find(const std::string& utt_id) const {
  for (const auto& r : records)
    if (r.utt_id == utt_id) return &r;
  return nullptr;
}

const UtteranceRecord& Manifest::find(const std::string& utt_id) const {
  if (const auto* r = try_find(utt_id)) return *r;
  throw std::out_of_range("manifest has no utterance '" + utt_id + "'");
}

std::vector<const UtteranceRecord*> Manifest::select(Split split) const {
  std::vector<const UtteranceRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

std::vector<int> Manifest::speakers_in(Split split) const {
  std::set<int> ids;
  for (const auto& r : records)
    if (r.split == split) ids.insert(r.speaker_id);
  return {ids.begin(), ids.end()};
}

void Manifest::validate(int min_train_utts_per_speaker) const {
  std::vector<std::string> errors;
  std::set<std::string> ids;
  std::set<int> train, test, all;
  std::map<int, int> clean_count;
  for (const auto& r : records) {
    if (!ids.insert(r.utt_id).second) errors.push_back("duplicate utt_id " + r.utt_id);
    all.insert(r.speaker_id);
    (is_train_split(r.split) ? train : test).insert(r.speaker_id);
    if (r.split == Split::train_clean) ++clean_count[r.speaker_id];
    if (split_has_snr(r.split) != r.snr_db.has_value())
      errors.push_back(r.utt_id + ": snr_db must be present exactly for noisy and augmented splits");
    if ((r.split == Split::train_noisy || r.split == Split::train_noisy_aug) && !r.paired_clean_id)
      errors.push_back(r.utt_id + ": noisy training utterance without a paired clean id");
  }
  for (const auto& r : records)
    if (r.paired_clean_id && !ids.count(*r.paired_clean_id))
      errors.push_back(r.utt_id + ": paired clean id " + *r.paired_clean_id + " not in manifest");
  for (int s : train)
    if (test.count(s)) errors.push_back("speaker " + std::to_string(s) + " appears in both train and test");
  if (static_cast<int>(all.size()) != speaker_count || (!all.empty() && (*all.begin() != 0 || *all.rbegin() != speaker_count - 1)))
    errors.push_back("speaker ids are not dense in [0, " + std::to_string(speaker_count) + ")");
  for (auto [spk, count] : clean_count)
    if (count < min_train_utts_per_speaker)
      errors.push_back("training speaker " + std::to_string(spk) + " has " + std::to_string(count) +
                       " utterances, fewer than " + std::to_string(min_train_utts_per_speaker));
  if (!errors.empty()) throw ValidationError(errors);
}

std::string Manifest::to_text() const {
  std::ostringstream os;
  os << "# nvl-manifest v1\tspeakers=" << speaker_count << "\tconfig_hash=" << config_hash << '\n';
  for (const auto& r : records) {
    os << r.utt_id << '\t' << r.speaker_id << '\t' << to_string(r.split) << '\t'
       << (r.snr_db ? format_double(*r.snr_db) : "-") << '\t' << (r.paired_clean_id ? *r.paired_clean_id : "-")
       << '\t' << r.path << '\n';
  }
  return os.str();
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (line[0] == '#') {
      for (const auto& f : fields) {
        if (f.rfind("speakers=", 0) == 0) m.speaker_count = std::stoi(f.substr(9));
        if (f.rfind("config_hash=", 0) == 0) m.config_hash = f.substr(12);
      }
      continue;
    }
    if (fields.size() != 6)
      throw IntegrityError("manifest line " + std::to_string(lineno) + ": expected 6 fields, got " +
                           std::to_string(fields.size()));
    UtteranceRecord r;
    r.utt_id = fields[0];
    r.speaker_id = std::stoi(fields[1]);
    r.split = parse_split(fields[2]);
    if (fields[3] != "-") r.snr_db = std::stod(fields[3]);
    if (fields[4] != "-") r.paired_clean_id = fields[4];
    r.path = fields[5];
    m.records.push_back(std::move(r));
  }
  return m;
}

void Manifest::write(const std::filesystem::path& path) const { write_file(path, to_text()); }
Manifest Manifest::read(const std::filesystem::path& path) { return parse(read_file(path)); }

// ---------------------------------------------------------------------------
// Config

void CorpusConfig::validate() const {
  std::vector<std::string> e;
  if (train_speakers < 1) e.push_back("corpus.train_speakers must be >= 1");
  if (test_speakers < 2) e.push_back("corpus.test_speakers must be >= 2");
  if (test_utts_per_speaker < 2) e.push_back("corpus.test_utts_per_speaker must be >= 2");
  if (train_utts_per_speaker < min_train_utts_per_speaker)
    e.push_back("corpus.train_utts_per_speaker must be >= corpus.min_train_utts_per_speaker (" +
                std::to_string(min_train_utts_per_speaker) + ")");
  if (min_duration_s < 1.0) e.push_back("corpus.min_duration_s must be >= 1");
  if (max_duration_s < min_duration_s) e.push_back("corpus.max_duration_s must be >= corpus.min_duration_s");
  if (static_cast<int>(frame_count(duration_samples(min_duration_s))) < min_frames)
    e.push_back("corpus.min_duration_s yields fewer than corpus.min_frames frames");
  if (!(train_snr_min_db < train_snr_max_db)) e.push_back("corpus.train_snr_min_db must be < corpus.train_snr_max_db");
  if (exclusion_window_db < 0) e.push_back("corpus.exclusion_window_db must be >= 0");
  if (exclusion_window_db * 2 * static_cast<double>(excluded_train_snrs.size()) >= train_snr_max_db - train_snr_min_db)
    e.push_back("corpus.excluded_train_snrs leave no admissible training SNR");
  if (test_snrs.empty()) e.push_back("corpus.test_snrs must not be empty");
  if (!(aug_snr_min_db <= aug_snr_max_db)) e.push_back("corpus.aug_snr_min_db must be <= corpus.aug_snr_max_db");
  if (noise_kinds.empty()) e.push_back("corpus.noise_kinds must not be empty");
  if (second_family_kinds.empty()) e.push_back("corpus.second_family_kinds must not be empty");
  if (second_family_fraction < 0 || second_family_fraction > 1)
    e.push_back("corpus.second_family_fraction must lie in [0, 1]");
  if (!e.empty()) throw ValidationError(e);
}

std::string CorpusConfig::canonical_text() const {
  auto list = [](const auto& v, auto fmt) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
  };
  auto num = [](double d) { return format_double(d); };
  auto kind = [](NoiseKind k) { return to_string(k); };
  std::ostringstream os;
  os << "corpus.seed = " << seed << '\n'
     << "corpus.train_speakers = " << train_speakers << '\n'
     << "corpus.test_speakers = " << test_speakers << '\n'
     << "corpus.train_utts_per_speaker = " << train_utts_per_speaker << '\n'
     << "corpus.test_utts_per_speaker = " << test_utts_per_speaker << '\n'
     << "corpus.min_duration_s = " << num(min_duration_s) << '\n'
     << "corpus.max_duration_s = " << num(max_duration_s) << '\n'
     << "corpus.train_snr_min_db = " << num(train_snr_min_db) << '\n'
     << "corpus.train_snr_max_db = " << num(train_snr_max_db) << '\n'
     << "corpus.excluded_train_snrs = " << list(excluded_train_snrs, num) << '\n'
     << "corpus.exclusion_window_db = " << num(exclusion_window_db) << '\n'
     << "corpus.test_snrs = " << list(test_snrs, num) << '\n'
     << "corpus.aug_snr_min_db = " << num(aug_snr_min_db) << '\n'
     << "corpus.aug_snr_max_db = " << num(aug_snr_max_db) << '\n'
     << "corpus.noise_kinds = " << list(noise_kinds, kind) << '\n'
     << "corpus.second_family_kinds = " << list(second_family_kinds, kind) << '\n'
     << "corpus.second_family_fraction = " << num(second_family_fraction) << '\n'
     << "corpus.min_frames = " << min_frames << '\n'
     << "corpus.min_train_utts_per_speaker = " << min_train_utts_per_speaker << '\n';
  return os.str();
}

std::string CorpusConfig::hash() const { return sha1_hex(canonical_text()).substr(0, 16); }

// ---------------------------------------------------------------------------
// Recipe

CorpusRecipe::CorpusRecipe(CorpusConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int total_speakers = cfg_.train_speakers + cfg_.test_speakers;
  for (int s = 0; s < total_speakers; ++s) speakers_.push_back(SpeakerModel::generate(s, cfg_.seed));

  auto draw_train_snr = [this](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(cfg_.train_snr_min_db, cfg_.train_snr_max_db);
    while (true) {
      const double v = u(rng);
      const bool excluded = std::any_of(cfg_.excluded_train_snrs.begin(), cfg_.excluded_train_snrs.end(),
                                        [&](double x) { return std::abs(v - x) <= cfg_.exclusion_window_db; });
      if (!excluded && v > cfg_.train_snr_min_db) return v;
    }
  };

  auto make_id = [](int spk, int utt, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "s%03du%02d-%s", spk, utt, suffix);
    return std::string(buf);
  };

  for (int s = 0; s < total_speakers; ++s) {
    const bool test = s >= cfg_.train_speakers;
    const int utts = test ? cfg_.test_utts_per_speaker : cfg_.train_utts_per_speaker;
    for (int u = 0; u < utts; ++u) {
      std::mt19937_64 rng(derive_seed(cfg_.seed, "utterance", {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(u)}));
      Group g;
      g.speaker_id = s;
      g.utt_index = u;
      g.test = test;
      g.duration_s = std::uniform_real_distribution<double>(cfg_.min_duration_s, cfg_.max_duration_s)(rng);
      g.duration_s = std::round(g.duration_s * 100.0) / 100.0;
      g.seed = rng();
      g.noise_kind = cfg_.noise_kinds[rng() % cfg_.noise_kinds.size()];
      g.snr_db = test ? cfg_.test_snrs[rng() % cfg_.test_snrs.size()] : draw_train_snr(rng);
      g.aug_second_family = std::uniform_real_distribution<double>(0, 1)(rng) < cfg_.second_family_fraction;
      const auto& family = g.aug_second_family ? cfg_.second_family_kinds : cfg_.noise_kinds;
      g.aug_kind = family[rng() % family.size()];
      g.aug_snr_db = std::uniform_real_distribution<double>(cfg_.aug_snr_min_db, cfg_.aug_snr_max_db)(rng);
      if (test) {
        g.ids[Split::test_clean] = make_id(s, u, "clean");
        g.ids[Split::test_noisy] = make_id(s, u, "noisy");
      } else {
        g.ids[Split::train_clean] = make_id(s, u, "clean");
        g.ids[Split::train_clean_aug] = make_id(s, u, "cleanaug");
        g.ids[Split::train_noisy] = make_id(s, u, "noisy");
        g.ids[Split::train_noisy_aug] = make_id(s, u, "noisyaug");
      }
      for (const auto& [split, id] : g.ids) group_of_[id] = groups_.size();
      groups_.push_back(std::move(g));
    }
  }

  manifest_.speaker_count = total_speakers;
  manifest_.config_hash = cfg_.hash();
  for (Split split : {Split::train_clean, Split::train_clean_aug, Split::train_noisy, Split::train_noisy_aug,
                      Split::test_clean, Split::test_noisy}) {
    for (const auto& g : groups_) {
      auto it = g.ids.find(split);
      if (it == g.ids.end()) continue;
      UtteranceRecord r;
      r.utt_id = it->second;
      r.speaker_id = g.speaker_id;
      r.split = split;
      r.path = "wav/" + to_string(split) + "/" + r.utt_id + ".wav";
      switch (split) {
        case Split::train_clean:
        case Split::test_clean:
          break;
        case Split::train_clean_aug:
          r.snr_db = g.aug_snr_db;
          r.paired_clean_id = g.ids.at(Split::train_clean);
          break;
        case Split::train_noisy:
        case Split::test_noisy:
          r.snr_db = g.snr_db;
          r.paired_clean_id = g.ids.at(split == Split::train_noisy ? Split::train_clean : Split::test_clean);
          break;
        case Split::train_noisy_aug:
          r.snr_db = g.snr_db;
          // Second-family augmentation stays in the target; the first family is removed.
          r.paired_clean_id = g.ids.at(g.aug_second_family ? Split::train_clean_aug : Split::train_clean);
          break;
      }
      manifest_.records.push_back(std::move(r));
    }
  }
  manifest_.validate(cfg_.min_train_utts_per_speaker);
}

std::map<Split, SynthesizedUtterance> CorpusRecipe::synthesize_group(std::size_t index) const {
  const Group& g = groups_.at(index);
  std::map<Split, SynthesizedUtterance> out;
  const Waveform clean = synth_utterance(speakers_[static_cast<std::size_t>(g.speaker_id)], g.duration_s, g.seed);
  const Waveform noise = synth_noise(g.noise_kind, g.duration_s, derive_seed(g.seed, "primary-noise"));

  auto mixture = [](const Waveform& base, const Waveform& n, double snr) {
    const double alpha = snr_noise_gain(base, n, snr);
    std::vector<double> added(base.size());
    for (std::size_t i = 0; i < added.size(); ++i) added[i] = alpha * n.samples[i];
    std::vector<double> signal(base.samples);
    for (std::size_t i = 0; i < signal.size(); ++i) signal[i] += added[i];
    return SynthesizedUtterance{Waveform(std::move(signal)), base, Waveform(std::move(added))};
  };

  if (g.test) {
    out[Split::test_clean] = SynthesizedUtterance{clean, clean, {}};
    out[Split::test_noisy] = mixture(clean, noise, g.snr_db);
    return out;
  }
  const Waveform aug_noise = synth_noise(g.aug_kind, g.duration_s, derive_seed(g.seed, "aug-noise"));
  out[Split::train_clean] = SynthesizedUtterance{clean, clean, {}};
  out[Split::train_clean_aug] = mixture(clean, aug_noise, g.aug_snr_db);
  out[Split::train_noisy] = mixture(clean, noise, g.snr_db);
  out[Split::train_noisy_aug] = mixture(out[Split::train_clean_aug].signal, noise, g.snr_db);
  return out;
}

SynthesizedUtterance CorpusRecipe::synthesize(const UtteranceRecord& record) const {
  auto it = group_of_.find(record.utt_id);
  if (it == group_of_.end()) throw std::out_of_range("recipe has no utterance '" + record.utt_id + "'");
  return synthesize_group(it->second).at(record.split);
}

Manifest build_corpus(const CorpusConfig& cfg) { return CorpusRecipe(cfg).manifest(); }

void write_corpus(const CorpusRecipe& recipe, const std::filesystem::path& root, int workers) {
  namespace fs = std::filesystem;
  for (Split s : {Split::train_clean, Split::train_clean_aug, Split::train_noisy, Split::train_noisy_aug,
                  Split::test_clean, Split::test_noisy})
    fs::create_directories(root / "wav" / to_string(s));
  const Manifest& manifest = recipe.manifest();

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&] {
    for (std::size_t g = next++; g < recipe.group_count(); g = next++) {
      try {
        const auto& ids = recipe.group_ids(g);
        for (const auto& [split, utt] : recipe.synthesize_group(g))
          write_wav(root / manifest.find(ids.at(split)).path, utt.signal);
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

  manifest.write(root / "manifest.tsv");
  write_file(root / "corpus.cfg", recipe.config().canonical_text());
}

}  // namespace nvl
