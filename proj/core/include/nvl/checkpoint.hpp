// core/include/nvl/checkpoint.hpp

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

#ifndef NVL_CHECKPOINT_HPP_
#define NVL_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nvl/tensor.hpp"

namespace nvl {

struct CheckpointEntry {
  std::string path;
  Shape shape;
  std::vector<double> values;
};

/**
   Parameter and optimizer blobs keyed by path, plus provenance.

   On disk: "NVLCKPT1", config hash, stage tag and step count, then a u32
   entry count and length-prefixed (path, shape, float64 blob) entries, all
   little-endian, closed by a CRC32 of everything before it.
*/
class Checkpoint {
 public:
  std::string stage;
  std::string config_hash;
  std::uint64_t step = 0;

  void put(const std::string& path, Shape shape, std::vector<double> values);
  void put(const std::string& path, const Tensor& t) { put(path, t.shape(), {t.data().begin(), t.data().end()}); }
  bool has(const std::string& path) const;
  const CheckpointEntry& get(const std::string& path) const;
  /// Entry as a fresh leaf; its shape must match `expected` when given.
  Tensor tensor(const std::string& path, const Shape& expected = {}) const;
  const std::vector<CheckpointEntry>& entries() const { return entries_; }

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<CheckpointEntry> entries_;
};

}  // namespace nvl

#endif  // NVL_CHECKPOINT_HPP_
