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

// Time-domain gap restoration by forward/backward linear prediction.

#include <cstddef>
#include <span>
#include <vector>

#include "sinpaint/dsp.hpp"
#include "sinpaint/mask.hpp"

namespace sinpaint {

struct LpcConfig {
  int order = 128;
  std::size_t context = 1024;  // samples per side used for fitting
  // Crossfade length in samples; 0 blends across the whole gap.
  std::size_t crossfade = 0;
};

struct LpcFit {
  // x[n] ~ sum_k coeffs[k] * x[n - 1 - k]
  std::vector<double> coeffs;
  bool degenerate = false;  // all-zero context
};

LpcFit fit_lpc(std::span<const double> context, int order);

// One-step prediction of x[n] from the `order` samples before it.
double predict_next(const LpcFit& fit, std::span<const double> history);

// Fills [gap.start, gap.end) from the surrounding samples. Samples outside
// the gap are returned unchanged.
Waveform extrapolate_gap(const Waveform& w, const SampleInterval& gap, const LpcConfig& cfg);

// Restores sorted, disjoint gaps in ascending order. The right context of a
// gap ends where the next gap starts.
Waveform inpaint_gaps(const Waveform& w, std::span<const SampleInterval> gaps,
                      const LpcConfig& cfg);

// Restores every time gap of a Time or TimeFreq mask in ascending order.
Waveform inpaint_time_masks(const Waveform& w, const Mask& mask, const LpcConfig& cfg);

}  // namespace sinpaint
