// core/src/checkpoint.cpp

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

#include "nvl/checkpoint.hpp"

#include <algorithm>

#include "nvl/util.hpp"

namespace nvl {

namespace {
constexpr std::string_view kMagic = "NVLCKPT1";
}

void Checkpoint::put(const std::string& path, Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size())
    throw ShapeError("checkpoint entry " + path + ": shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  for (auto& e : entries_)
    if (e.path == path) {
      e.shape = std::move(shape);
      e.values = std::move(values);
      return;
    }
  entries_.push_back({path, std::move(shape), std::move(values)});
}

bool Checkpoint::has(const std::string& path) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.path == path; });
}

const CheckpointEntry& Checkpoint::get(const std::string& path) const {
  for (const auto& e : entries_)
    if (e.path == path) return e;
  throw std::out_of_range("checkpoint has no entry '" + path + "'");
}

Tensor Checkpoint::tensor(const std::string& path, const Shape& expected) const {
  const auto& e = get(path);
  if (!expected.empty() && e.shape != expected)
    throw ShapeError("checkpoint entry " + path + " has shape " + to_string(e.shape) + ", expected " +
                     to_string(expected));
  return Tensor::from_vector(e.shape, e.values);
}

std::string Checkpoint::serialize() const {
  ByteWriter w;
  w.bytes(kMagic);
  w.string(config_hash);
  w.string(stage);
  w.u64(step);
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.string(e.path);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.u64(d);
    w.u64(e.values.size());
    for (double v : e.values) w.f64(v);
  }
  const auto& body = w.buffer();
  const std::uint32_t crc =
      crc32({reinterpret_cast<const unsigned char*>(body.data()), body.size()});
  ByteWriter tail;
  tail.u32(crc);
  return body + tail.buffer();
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 || bytes.substr(0, kMagic.size()) != kMagic)
    throw IntegrityError("checkpoint: bad magic");
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  const std::uint32_t stored = ByteReader(bytes.substr(bytes.size() - 4)).u32();
  if (crc32({reinterpret_cast<const unsigned char*>(body.data()), body.size()}) != stored)
    throw IntegrityError("checkpoint: CRC mismatch (file truncated or corrupt)");

  ByteReader r(body);
  r.bytes(kMagic.size());
  Checkpoint ck;
  ck.config_hash = r.string();
  ck.stage = r.string();
  ck.step = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.path = r.string();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IntegrityError("checkpoint: implausible rank for " + e.path);
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.u64());
    const std::uint64_t n = r.u64();
    if (n != numel(e.shape) || n > r.remaining() / 8) throw IntegrityError("checkpoint: bad blob size for " + e.path);
    e.values.resize(n);
    for (auto& v : e.values) v = r.f64();
    ck.entries_.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw IntegrityError("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

}  // namespace nvl
