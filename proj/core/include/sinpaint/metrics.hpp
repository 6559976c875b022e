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

// Objective quality scores: STOI computed in-process and PESQ delegated to an
// external backend.

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sinpaint/dsp.hpp"
#include "sinpaint/error.hpp"

namespace sinpaint {

// Short-time objective intelligibility of `degraded` against `reference`.
// Both signals are resampled to 10 kHz; frames that are silent in the
// reference are dropped before scoring.
double stoi(const Waveform& reference, const Waveform& degraded);

// Octave-compatible polyphase resampler (Kaiser-windowed sinc).
std::vector<double> resample_poly(std::span<const double> x, int up, int down);

struct ScorePair {
  double stoi = 0.0;
  std::optional<double> pesq;
};

class PesqError : public Error {
 public:
  using Error::Error;
};

class PesqBackend {
 public:
  virtual ~PesqBackend() = default;
  // Throws PesqError when no score could be obtained.
  virtual double score(const Waveform& reference, const Waveform& degraded) const = 0;
  // Scale label reported next to the numbers, e.g. "mos-lqo".
  virtual std::string scale() const = 0;
};

// Runs `program ref.wav deg.wav rate` and parses a single number from stdout.
class ExternalPesqBackend final : public PesqBackend {
 public:
  ExternalPesqBackend(std::vector<std::string> command, std::chrono::milliseconds timeout,
                      std::string scale = "mos-lqo");

  double score(const Waveform& reference, const Waveform& degraded) const override;
  std::string scale() const override { return scale_; }

 private:
  std::vector<std::string> command_;
  std::chrono::milliseconds timeout_;
  std::string scale_;
};

// nullptr when PESQ is unavailable.
std::optional<double> pesq(const Waveform& reference, const Waveform& degraded,
                           const PesqBackend* backend);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // population
};

// Order-independent mean and standard deviation.
Summary summarize(std::span<const double> values);

}  // namespace sinpaint
