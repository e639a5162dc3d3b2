// core/src/wav.cpp

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

#include "nvl/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "nvl/util.hpp"

namespace nvl {

std::string encode_wav(const Waveform& w) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  ByteWriter out;
  out.bytes("RIFF");
  out.u32(36 + data_bytes);
  out.bytes("WAVE");
  out.bytes("fmt ");
  out.u32(16);
  out.u32(1 | (1u << 16));  // PCM, mono
  out.u32(static_cast<std::uint32_t>(w.sample_rate));
  out.u32(static_cast<std::uint32_t>(w.sample_rate * 2));
  out.u32(2 | (16u << 16));  // block align, bits per sample
  out.bytes("data");
  out.u32(data_bytes);
  std::string pcm(w.size() * 2, '\0');
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double scaled = std::round(std::clamp(w.samples[i], -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    std::memcpy(pcm.data() + 2 * i, &v, 2);
  }
  out.bytes(pcm);
  return out.buffer();
}

Waveform decode_wav(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.bytes(4) != "RIFF") throw IntegrityError("wav: missing RIFF header");
  r.u32();
  if (r.bytes(4) != "WAVE") throw IntegrityError("wav: missing WAVE tag");
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    const std::string_view id = r.bytes(4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      ByteReader f(r.bytes(size));
      const std::uint32_t format_channels = f.u32();
      const std::uint32_t rate = f.u32();
      f.u32();
      const std::uint32_t align_bits = f.u32();
      if ((format_channels & 0xffff) != 1 || (format_channels >> 16) != 1 || (align_bits >> 16) != 16)
        throw IntegrityError("wav: only mono 16-bit PCM is supported");
      if (rate != static_cast<std::uint32_t>(kSampleRate))
        throw IntegrityError("wav: sample rate " + std::to_string(rate) + " is not 16000");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw IntegrityError("wav: data chunk before fmt chunk");
      const std::string_view pcm = r.bytes(size);
      std::vector<double> samples(size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        std::int16_t v;
        std::memcpy(&v, pcm.data() + 2 * i, 2);
        samples[i] = v / 32768.0;
      }
      return Waveform(std::move(samples));
    } else {
      r.bytes(size + (size & 1));
    }
  }
  throw IntegrityError("wav: no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& w) { write_file(path, encode_wav(w)); }

Waveform read_wav(const std::filesystem::path& path) {
  try {
    return decode_wav(read_file(path));
  } catch (const IntegrityError& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

}  // namespace nvl
