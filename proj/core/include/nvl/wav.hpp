// core/include/nvl/wav.hpp

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

#ifndef NVL_WAV_HPP_
#define NVL_WAV_HPP_

#include <filesystem>
#include <string>

#include "nvl/dsp.hpp"

namespace nvl {

/// 16 kHz mono 16-bit little-endian PCM.  Samples are clamped to [-1, 1).
std::string encode_wav(const Waveform& w);
Waveform decode_wav(const std::string& bytes);

void write_wav(const std::filesystem::path& path, const Waveform& w);
Waveform read_wav(const std::filesystem::path& path);

}  // namespace nvl

#endif  // NVL_WAV_HPP_
