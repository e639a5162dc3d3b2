// core/src/config.cpp

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

#include "nvl/config.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "nvl/util.hpp"

namespace nvl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("'" + v + "' is not a valid number");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("'" + v + "' is not a boolean");
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::string join_kinds(const std::vector<NoiseKind>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + to_string(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool hashed = true;
};

#define NVL_INT(key, member)                                                                     \
  Field{key, [](RunConfig& c, const std::string& v) { c.member = parse_number<int>(v); },         \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define NVL_DOUBLE(key, member)                                                                  \
  Field{key, [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(v); },      \
        [](const RunConfig& c) { return format_double(c.member); }}
#define NVL_BOOL(key, member)                                                                    \
  Field{key, [](RunConfig& c, const std::string& v) { c.member = parse_bool(v); },                \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define NVL_DOUBLES(key, member)                                                                 \
  Field{key,                                                                                     \
        [](RunConfig& c, const std::string& v) {                                                 \
          c.member.clear();                                                                      \
          for (const auto& x : split_list(v)) c.member.push_back(parse_number<double>(x));       \
        },                                                                                       \
        [](const RunConfig& c) { return join_doubles(c.member); }}
#define NVL_KINDS(key, member)                                                                   \
  Field{key,                                                                                     \
        [](RunConfig& c, const std::string& v) {                                                 \
          c.member.clear();                                                                      \
          for (const auto& x : split_list(v)) c.member.push_back(parse_noise_kind(x));           \
        },                                                                                       \
        [](const RunConfig& c) { return join_kinds(c.member); }}
#define NVL_STAGE(name)                                                                          \
  Field{#name ".optimizer",                                                                      \
        [](RunConfig& c, const std::string& v) { c.train.name.optimizer = parse_optimizer_kind(v); }, \
        [](const RunConfig& c) { return to_string(c.train.name.optimizer); }},                   \
      NVL_DOUBLE(#name ".lr", train.name.lr), NVL_INT(#name ".batch", train.name.batch),         \
      NVL_INT(#name ".max_epochs", train.name.max_epochs)

const std::vector<Field>& schema() {
  static const std::vector<Field> fields{
      Field{"run.seed", [](RunConfig& c, const std::string& v) { c.set_seed(parse_number<std::uint64_t>(v));
              c.seed_given = true; },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Field{"run.workers", [](RunConfig& c, const std::string& v) { c.workers = c.train.workers = parse_number<int>(v); },
            [](const RunConfig& c) { return std::to_string(c.workers); }, false},
      NVL_INT("corpus.train_speakers", corpus.train_speakers),
      NVL_INT("corpus.test_speakers", corpus.test_speakers),
      NVL_INT("corpus.train_utts_per_speaker", corpus.train_utts_per_speaker),
      NVL_INT("corpus.test_utts_per_speaker", corpus.test_utts_per_speaker),
      NVL_DOUBLE("corpus.min_duration_s", corpus.min_duration_s),
      NVL_DOUBLE("corpus.max_duration_s", corpus.max_duration_s),
      NVL_DOUBLE("corpus.train_snr_min_db", corpus.train_snr_min_db),
      NVL_DOUBLE("corpus.train_snr_max_db", corpus.train_snr_max_db),
      NVL_DOUBLES("corpus.excluded_train_snrs", corpus.excluded_train_snrs),
      NVL_DOUBLE("corpus.exclusion_window_db", corpus.exclusion_window_db),
      NVL_DOUBLES("corpus.test_snrs", corpus.test_snrs),
      NVL_DOUBLE("corpus.aug_snr_min_db", corpus.aug_snr_min_db),
      NVL_DOUBLE("corpus.aug_snr_max_db", corpus.aug_snr_max_db),
      NVL_KINDS("corpus.noise_kinds", corpus.noise_kinds),
      NVL_KINDS("corpus.second_family_kinds", corpus.second_family_kinds),
      NVL_DOUBLE("corpus.second_family_fraction", corpus.second_family_fraction),
      NVL_INT("corpus.min_frames", corpus.min_frames),
      NVL_INT("corpus.min_train_utts_per_speaker", corpus.min_train_utts_per_speaker),
      NVL_INT("enhancer.layers", train.enhancer.layers),
      NVL_INT("enhancer.hidden", train.enhancer.hidden),
      NVL_INT("embedder.tdnn_width", train.embedder.tdnn_width),
      NVL_INT("embedder.pool_width", train.embedder.pool_width),
      NVL_INT("embedder.embedding_dim", train.embedder.embedding_dim),
      NVL_INT("embedder.fc2_dim", train.embedder.fc2_dim),
      NVL_INT("train.segment_frames", train.segment_frames),
      NVL_DOUBLE("train.lambda", train.lambda),
      NVL_INT("train.sigma_power", train.norm.sigma_power),
      NVL_BOOL("train.layer_normalize", train.perceptual.layer_normalize),
      NVL_DOUBLE("train.halve_threshold", train.halve_threshold),
      NVL_INT("train.max_halvings", train.max_halvings),
      NVL_INT("train.group_size", train.group_size),
      NVL_STAGE(pretrain1),
      NVL_STAGE(pretrain2),
      NVL_STAGE(finetune),
      NVL_INT("eval.trials_per_speaker", eval.trials_per_speaker),
      NVL_DOUBLE("eval.p_target", eval.p_target),
      NVL_BOOL("eval.vad", eval.vad),
  };
  return fields;
}

#undef NVL_INT
#undef NVL_DOUBLE
#undef NVL_BOOL
#undef NVL_DOUBLES
#undef NVL_KINDS
#undef NVL_STAGE

const Field* find_field(const std::string& key) {
  for (const auto& f : schema())
    if (f.key == key) return &f;
  return nullptr;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  corpus.seed = s;
  train.seed = s;
  eval.seed = s;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ValidationError({"unknown key '" + key + "'"});
  try {
    f->set(*this, trim(value));
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError({key + ": " + e.what()});
  }
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::vector<std::string> errors;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) {
      errors.push_back("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
      continue;
    }
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const ValidationError& e) {
      for (const auto& v : e.violations()) errors.push_back("line " + std::to_string(lineno) + ": " + v);
    }
  }
  if (!errors.empty()) throw ValidationError(errors);
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void RunConfig::validate() const {
  std::vector<std::string> errors;
  auto collect = [&](auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      errors.insert(errors.end(), e.violations().begin(), e.violations().end());
    }
  };
  if (workers < 1) errors.push_back("run.workers must be >= 1");
  collect([&] { corpus.validate(); });
  collect([&] { train.validate(); });
  collect([&] { eval.validate(); });
  if (!errors.empty()) throw ValidationError(errors);
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& f : schema()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::string text;
  for (const auto& f : schema())
    if (f.hashed) text += f.key + " = " + f.get(*this) + "\n";
  return sha1_hex(text).substr(0, 16);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : schema()) out.push_back(f.key);
  return out;
}

}  // namespace nvl
