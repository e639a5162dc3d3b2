// core/include/nvl/config.hpp

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

#ifndef NVL_CONFIG_HPP_
#define NVL_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nvl/corpus.hpp"
#include "nvl/trainer.hpp"

namespace nvl {

/**
   Every tunable of a run.  Text form is one "key = value" per line with
   dotted keys ("corpus.train_speakers = 20"); '#' starts a comment.  Lists
   are comma-separated.  Unknown keys are rejected.  A single seed drives the
   corpus, initialisation, data order and trial lists.
*/
struct RunConfig {
  std::uint64_t seed = 0;
  bool seed_given = false;  // run.seed appeared in the parsed text
  int workers = 1;
  CorpusConfig corpus;
  TrainConfig train;
  EvalConfig eval;

  /// Defaults overridden by `text`; throws ValidationError.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Applies one "key = value" assignment.
  void set(const std::string& key, const std::string& value);
  void set_seed(std::uint64_t s);

  void validate() const;
  /// Every key in schema order with its resolved value.
  std::string canonical_text() const;
  /// Hash of canonical_text() without the worker count.
  std::string hash() const;

  static std::vector<std::string> keys();
};

}  // namespace nvl

#endif  // NVL_CONFIG_HPP_
