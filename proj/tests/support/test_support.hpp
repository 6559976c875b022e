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

// Shared helpers for the unit tests: signal generators, scratch directories
// and random tensors.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sinpaint/dsp.hpp"
#include "sinpaint/nn.hpp"
#include "sinpaint/synth.hpp"

namespace sinpaint::testing {

struct Partial {
  double freq_hz;
  double amplitude;
  double phase = 0.0;
};

inline Waveform tones(std::size_t n, const std::vector<Partial>& partials) {
  Waveform w;
  w.samples.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / kSampleRate;
    for (const auto& p : partials) {
      w.samples[i] += p.amplitude * std::sin(2.0 * std::numbers::pi * p.freq_hz * t + p.phase);
    }
  }
  return w;
}

// One synthetic utterance cut to exactly `segments` full segments (zero
// padded when the sentence is short).
inline std::vector<Waveform> speech_segments(std::uint64_t seed, std::size_t segments) {
  static const SpeechSynthesizer synth(7, 400);
  std::vector<Waveform> out;
  std::uint64_t s = seed;
  while (out.size() < segments) {
    const auto speaker = SpeechSynthesizer::random_speaker(s, s % 2 == 0);
    std::vector<int> words = synth.random_sentence(s);
    Waveform w = synth.speak(words, speaker, s + 1);
    for (auto& seg : segment(w)) {
      if (out.size() < segments) out.push_back(std::move(seg));
    }
    ++s;
  }
  return out;
}

inline double snr_db(std::span<const double> ref, std::span<const double> est) {
  double e = 0.0, d = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    e += ref[i] * ref[i];
    d += (ref[i] - est[i]) * (ref[i] - est[i]);
  }
  return 10.0 * std::log10(e / d);
}

inline nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  nn::Tensor t(shape);
  for (double& v : t.data) v = dist(rng);
  return t;
}

// Removed again when the test case ends.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("sinpaint-" + tag + "-" + std::to_string(rng() % 1000000007ULL));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace sinpaint::testing
