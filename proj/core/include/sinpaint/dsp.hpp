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

// Segmentation, STFT analysis/synthesis, log-magnitude features, per-channel
// normalization, phase reconstruction and speech-shaped noise.
//
// All time-frequency matrices are stored as (frequency bin) x (frame):
// row r is frequency channel r (r * 62.5 Hz), column c is STFT frame c.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace sinpaint {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kSegmentSamples = 16384;
inline constexpr int kWindowLength = 256;
inline constexpr int kHopLength = 128;
inline constexpr int kNumBins = 128;
inline constexpr int kNumFrames = 128;
inline constexpr double kLogFloor = 1e-9;
inline constexpr double kStdFloor = 1e-6;

using TfMatrix = Eigen::ArrayXXd;
// true = valid, false = masked; same layout as TfMatrix.
using ValidMap = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Waveform {
  std::vector<double> samples;
  int rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
};

struct ComplexSpectrogram {
  Eigen::ArrayXXcd values;
};

struct LogMagnitude {
  TfMatrix values;
  bool normalized = false;
};

// Radians in (-pi, pi].
struct PhaseMatrix {
  TfMatrix values;
};

struct ChannelStats {
  Eigen::ArrayXd mean;
  Eigen::ArrayXd std;
};

// Splits into consecutive, non-overlapping 16384-sample segments; the trailing
// remainder is dropped.
std::vector<Waveform> segment(const Waveform& w);

ComplexSpectrogram stft(const Waveform& seg);

// Least-squares overlap-add inverse of stft(). `mag` must be denormalized.
Waveform istft(const LogMagnitude& mag, const PhaseMatrix& phase);
Waveform istft(const ComplexSpectrogram& spec);

LogMagnitude log_magnitude(const ComplexSpectrogram& spec);
PhaseMatrix phase_of(const ComplexSpectrogram& spec);
ComplexSpectrogram to_complex(const LogMagnitude& mag, const PhaseMatrix& phase);

// Streaming pooled mean / population std per frequency channel.
class StatsAccumulator {
 public:
  StatsAccumulator();
  void add(const LogMagnitude& m);
  std::size_t count() const { return frames_; }
  ChannelStats finish() const;

 private:
  Eigen::ArrayXd sum_;
  Eigen::ArrayXd sum_sq_;
  std::size_t frames_ = 0;
};

ChannelStats compute_stats(std::span<const LogMagnitude> corpus);

LogMagnitude normalize(const LogMagnitude& m, const ChannelStats& s);
LogMagnitude denormalize(const LogMagnitude& m, const ChannelStats& s);

void save_stats(const std::filesystem::path& path, const ChannelStats& s);
ChannelStats load_stats(const std::filesystem::path& path);

struct PhaseOptions {
  int iterations = 100;
  // Frequency half-width of the local weighted-sum kernel.
  int kernel_bins = 5;
  // Optional initial phase (zero phase when absent).
  std::optional<PhaseMatrix> initial_phase;
  // When set together with initial_phase, bins where this map is true keep the
  // initial phase throughout (known valid-region phase).
  std::optional<ValidMap> fixed;
  // Record spectral convergence after every iteration.
  bool track_convergence = false;
};

struct PhaseResult {
  PhaseMatrix phase;
  std::vector<double> convergence;
};

// Local weighted sums phase retrieval from a denormalized log-magnitude.
PhaseResult reconstruct_phase(const LogMagnitude& mag, const PhaseOptions& opts = {});

// || |stft(istft(|Y| e^{i phase}))| - |Y| ||_F / || |Y| ||_F
double spectral_convergence(const LogMagnitude& mag, const PhaseMatrix& phase);

// Masked bins (valid == false) receive the log-magnitude of complex Gaussian
// noise whose per-channel expected power equals the channel's mean power in
// `orig`. `orig` must be denormalized.
LogMagnitude speech_shaped_noise_fill(
    const LogMagnitude& orig, const ValidMap& valid, std::uint64_t seed);

// Periodic Hann window of the given length.
std::vector<double> hann_window(int length);

}  // namespace sinpaint
