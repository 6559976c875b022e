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

// Time, time+frequency and random block masks, the training mask-size
// sampler, and the fill modes used to corrupt masked bins.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sinpaint/dsp.hpp"

namespace sinpaint {

enum class MaskKind { Time, TimeFreq, Random };

std::string to_string(MaskKind k);
MaskKind parse_mask_kind(const std::string& s);

struct MaskSpec {
  MaskKind kind = MaskKind::Time;
  double coverage = 0.0;  // [0, 0.6]
  std::uint64_t seed = 0;
};

inline constexpr int kMinBlockBins = 3;
inline constexpr int kMaxBlocks = 4;
inline constexpr double kMaxCoverage = 0.6;

struct Mask {
  ValidMap valid;  // bins x frames, true = valid
  MaskSpec spec;

  std::size_t masked_count() const;
  double masked_fraction() const;
  static Mask all_valid(const MaskSpec& spec = {});
};

// Deterministic given spec.seed. Blocks within one dimension never overlap or
// touch, so every maximal masked run along a masked dimension is one block.
Mask sample_mask(const MaskSpec& spec);

struct MaskSizeSampler {
  double mu = 0.294;
  double sigma = 0.099;
  double lower = 3.0 / 128.0;
  double upper = kMaxCoverage;
};

// Truncated normal draw by rejection.
double sample_training_size(const MaskSizeSampler& s, std::uint64_t seed);

enum class FillMode { Zeros, WhiteNoise, AdditiveNoise, SpeechShaped };

std::string to_string(FillMode m);
FillMode parse_fill_mode(const std::string& s);

struct NoiseParams {
  double white_mean = 0.0;
  double white_std = 1.0;
  // Target signal-to-noise ratio inside the masked region for AdditiveNoise.
  double additive_snr_db = -15.0;
};

struct CorruptedInput {
  LogMagnitude magnitude;
  PhaseMatrix phase;
};

// Valid bins are left bit-identical; masked phase bins are set to zero.
CorruptedInput apply_mask(const LogMagnitude& m, const PhaseMatrix& p, const Mask& mask,
                          FillMode mode, const NoiseParams& noise, std::uint64_t seed);

// SNR (dB) of `clean` against `corrupted - clean`, restricted to masked bins.
double masked_region_snr_db(const LogMagnitude& clean, const LogMagnitude& corrupted,
                            const Mask& mask);

struct SampleInterval {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive

  bool operator==(const SampleInterval&) const = default;
};

// Fully masked frame columns mapped to sample intervals through the hop size.
// Random masks raise UnsupportedError.
std::vector<SampleInterval> mask_to_time_gaps(const Mask& mask);

// Maximal runs [first, last) of fully masked columns (or rows when `rows`).
std::vector<std::pair<int, int>> masked_runs(const Mask& mask, bool rows);

void save_mask(const std::filesystem::path& path, const Mask& mask);
Mask load_mask(const std::filesystem::path& path);

}  // namespace sinpaint
