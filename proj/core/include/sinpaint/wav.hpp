/*
Copyright 2026 The sinpaint Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <filesystem>

#include "sinpaint/dsp.hpp"

namespace sinpaint {

// Reads a mono 16-bit PCM RIFF/WAVE file sampled at 16 kHz. Samples are scaled
// to [-1, 1). Any other layout raises DataError with a conversion hint.
Waveform read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace sinpaint
