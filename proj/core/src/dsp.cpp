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

#include "sinpaint/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "fft.hpp"
#include "sinpaint/error.hpp"
#include "sinpaint/rng.hpp"

namespace sinpaint {

namespace {

constexpr int kFftBins = kWindowLength / 2 + 1;  // 129, Nyquist included
constexpr std::size_t kPaddedSamples = kSegmentSamples + kHopLength;
constexpr int kStatsFormatVersion = 1;

const std::vector<double>& analysis_window() {
  static const std::vector<double> w = hann_window(kWindowLength);
  return w;
}

void require_tf_shape(const TfMatrix& m, const char* what) {
  if (m.rows() != kNumBins || m.cols() != kNumFrames) {
    throw ContractViolation(std::string(what) + ": expected a 128x128 matrix");
  }
}

// Overlap-add inverse shared by both istft overloads. Frame c holds bins
// 0..127; the Nyquist bin is reinserted as zero.
Waveform overlap_add(const Eigen::ArrayXXcd& spec) {
  const auto& w = analysis_window();
  auto& fft = detail::real_fft(kWindowLength);
  std::vector<double> out(kPaddedSamples, 0.0);
  std::vector<double> norm(kPaddedSamples, 0.0);
  std::array<std::complex<double>, kFftBins> bins{};
  std::array<double, kWindowLength> frame{};
  for (int c = 0; c < kNumFrames; ++c) {
    for (int k = 0; k < kNumBins; ++k) bins[k] = spec(k, c);
    bins[kNumBins] = 0.0;
    fft.inverse(bins, frame);
    const std::size_t start = static_cast<std::size_t>(c) * kHopLength;
    for (int n = 0; n < kWindowLength; ++n) {
      out[start + n] += w[n] * frame[n];
      norm[start + n] += w[n] * w[n];
    }
  }
  Waveform result;
  result.samples.resize(kSegmentSamples);
  for (std::size_t i = 0; i < kSegmentSamples; ++i) {
    result.samples[i] = norm[i] > 1e-12 ? out[i] / norm[i] : 0.0;
  }
  return result;
}

double wrap_phase(double a) {
  // Map to (-pi, pi].
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  if (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  return a;
}

// Consistency kernel of stft(istft(.)) around an interior source bin, one per
// source-bin parity (hop = N/2 makes the kernel alternate sign with parity).
struct LwsKernel {
  static constexpr int kMaxBins = 8;
  // [parity][q + 1][l + kMaxBins]
  std::array<std::array<std::array<std::complex<double>, 2 * kMaxBins + 1>, 3>, 2> k{};
};

const LwsKernel& lws_kernel() {
  static const LwsKernel kernel = [] {
    LwsKernel out;
    constexpr int t0 = kNumFrames / 2;
    for (int parity = 0; parity < 2; ++parity) {
      const int f0 = 40 + parity;
      Eigen::ArrayXXcd impulse = Eigen::ArrayXXcd::Zero(kNumBins, kNumFrames);
      impulse(f0, t0) = 1.0;
      // istft is only R-linear on one-sided spectra; away from DC and
      // Nyquist the mirror image does not reach the kernel support.
      Waveform w = istft(ComplexSpectrogram{impulse});
      Eigen::ArrayXXcd r = stft(w).values;
      for (int q = -1; q <= 1; ++q) {
        for (int l = -LwsKernel::kMaxBins; l <= LwsKernel::kMaxBins; ++l) {
          out.k[parity][q + 1][l + LwsKernel::kMaxBins] = r(f0 + l, t0 + q);
        }
      }
    }
    return out;
  }();
  return kernel;
}

}  // namespace

std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  }
  return w;
}

std::vector<Waveform> segment(const Waveform& w) {
  if (w.rate != kSampleRate) {
    throw ContractViolation("segment: waveform must be sampled at 16 kHz");
  }
  std::vector<Waveform> out;
  const std::size_t n = w.size() / kSegmentSamples;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto first = w.samples.begin() + static_cast<std::ptrdiff_t>(i * kSegmentSamples);
    out.push_back(Waveform{std::vector<double>(first, first + kSegmentSamples), kSampleRate});
  }
  return out;
}

ComplexSpectrogram stft(const Waveform& seg) {
  if (seg.size() != kSegmentSamples) {
    throw ContractViolation("stft: segment must hold exactly 16384 samples, got " +
                            std::to_string(seg.size()));
  }
  const auto& w = analysis_window();
  auto& fft = detail::real_fft(kWindowLength);
  std::vector<double> padded(kPaddedSamples, 0.0);
  std::copy(seg.samples.begin(), seg.samples.end(), padded.begin());

  ComplexSpectrogram out{Eigen::ArrayXXcd(kNumBins, kNumFrames)};
  std::array<double, kWindowLength> frame{};
  std::array<std::complex<double>, kFftBins> bins{};
  for (int c = 0; c < kNumFrames; ++c) {
    const std::size_t start = static_cast<std::size_t>(c) * kHopLength;
    for (int n = 0; n < kWindowLength; ++n) frame[n] = padded[start + n] * w[n];
    fft.forward(frame, bins);
    for (int k = 0; k < kNumBins; ++k) out.values(k, c) = bins[k];
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& spec) {
  if (spec.values.rows() != kNumBins || spec.values.cols() != kNumFrames) {
    throw ContractViolation("istft: expected a 128x128 spectrogram");
  }
  return overlap_add(spec.values);
}

Waveform istft(const LogMagnitude& mag, const PhaseMatrix& phase) {
  if (mag.normalized) {
    throw ContractViolation("istft: magnitude must be denormalized first");
  }
  return overlap_add(to_complex(mag, phase).values);
}

LogMagnitude log_magnitude(const ComplexSpectrogram& spec) {
  require_tf_shape(spec.values.real(), "log_magnitude");
  LogMagnitude out{spec.values.abs().max(kLogFloor).log(), false};
  return out;
}

PhaseMatrix phase_of(const ComplexSpectrogram& spec) {
  PhaseMatrix out{TfMatrix(spec.values.rows(), spec.values.cols())};
  for (Eigen::Index c = 0; c < spec.values.cols(); ++c) {
    for (Eigen::Index r = 0; r < spec.values.rows(); ++r) {
      // std::arg returns [-pi, pi]; fold -pi onto pi.
      out.values(r, c) = wrap_phase(std::arg(spec.values(r, c)));
    }
  }
  return out;
}

ComplexSpectrogram to_complex(const LogMagnitude& mag, const PhaseMatrix& phase) {
  require_tf_shape(mag.values, "to_complex");
  require_tf_shape(phase.values, "to_complex");
  ComplexSpectrogram out{Eigen::ArrayXXcd(kNumBins, kNumFrames)};
  for (int c = 0; c < kNumFrames; ++c) {
    for (int r = 0; r < kNumBins; ++r) {
      out.values(r, c) = std::polar(std::exp(mag.values(r, c)), phase.values(r, c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-channel statistics

StatsAccumulator::StatsAccumulator()
    : sum_(Eigen::ArrayXd::Zero(kNumBins)), sum_sq_(Eigen::ArrayXd::Zero(kNumBins)) {}

void StatsAccumulator::add(const LogMagnitude& m) {
  if (m.normalized) throw ContractViolation("compute_stats: inputs must be unnormalized");
  require_tf_shape(m.values, "compute_stats");
  // Chan et al. pairwise merge of (count, mean, M2); sum_ holds the running
  // mean and sum_sq_ the running M2.
  const double nb = static_cast<double>(m.values.cols());
  const Eigen::ArrayXd mean_b = m.values.rowwise().mean();
  const Eigen::ArrayXd m2_b = (m.values.colwise() - mean_b).square().rowwise().sum();
  const double na = static_cast<double>(frames_);
  const double n = na + nb;
  const Eigen::ArrayXd delta = mean_b - sum_;
  sum_ += delta * (nb / n);
  sum_sq_ += m2_b + delta.square() * (na * nb / n);
  frames_ += static_cast<std::size_t>(nb);
}

ChannelStats StatsAccumulator::finish() const {
  if (frames_ == 0) throw DataError("compute_stats: empty corpus");
  ChannelStats s;
  s.mean = sum_;
  s.std = (sum_sq_ / static_cast<double>(frames_)).sqrt().max(kStdFloor);
  return s;
}

ChannelStats compute_stats(std::span<const LogMagnitude> corpus) {
  StatsAccumulator acc;
  for (const auto& m : corpus) acc.add(m);
  return acc.finish();
}

LogMagnitude normalize(const LogMagnitude& m, const ChannelStats& s) {
  if (m.normalized) throw ContractViolation("normalize: input already normalized");
  LogMagnitude out{(m.values.colwise() - s.mean).colwise() / s.std, true};
  return out;
}

LogMagnitude denormalize(const LogMagnitude& m, const ChannelStats& s) {
  if (!m.normalized) throw ContractViolation("denormalize: input is not normalized");
  LogMagnitude out{(m.values.colwise() * s.std).colwise() + s.mean, false};
  return out;
}

void save_stats(const std::filesystem::path& path, const ChannelStats& s) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write stats file " + path.string());
  out << "sinpaint-stats " << kStatsFormatVersion << "\n";
  out << "bins " << s.mean.size() << "\n";
  out.precision(17);
  out << "mean";
  for (double v : s.mean) out << ' ' << v;
  out << "\nstd";
  for (double v : s.std) out << ' ' << v;
  out << "\n";
}

ChannelStats load_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stats file " + path.string());
  std::string magic, key;
  int version = 0;
  Eigen::Index bins = 0;
  in >> magic >> version;
  if (magic != "sinpaint-stats") throw DataError(path.string() + " is not a stats file");
  if (version != kStatsFormatVersion) {
    throw DataError("unsupported stats file version " + std::to_string(version));
  }
  in >> key >> bins;
  if (key != "bins" || bins != kNumBins) throw DataError("stats file must hold 128 channels");
  ChannelStats s{Eigen::ArrayXd(bins), Eigen::ArrayXd(bins)};
  in >> key;
  if (key != "mean") throw DataError("stats file: missing mean row");
  for (Eigen::Index i = 0; i < bins; ++i) in >> s.mean[i];
  in >> key;
  if (key != "std") throw DataError("stats file: missing std row");
  for (Eigen::Index i = 0; i < bins; ++i) in >> s.std[i];
  if (!in) throw DataError("stats file truncated: " + path.string());
  if ((s.std <= 0.0).any()) throw DataError("stats file: std must be positive");
  return s;
}

// ---------------------------------------------------------------------------
// Phase reconstruction

double spectral_convergence(const LogMagnitude& mag, const PhaseMatrix& phase) {
  const TfMatrix target = mag.values.exp();
  const Waveform w = istft(mag, phase);
  const TfMatrix rebuilt = stft(w).values.abs();
  const double denom = std::sqrt(target.square().sum());
  if (denom <= 0.0) return 0.0;
  return std::sqrt((rebuilt - target).square().sum()) / denom;
}

PhaseResult reconstruct_phase(const LogMagnitude& mag, const PhaseOptions& opts) {
  if (mag.normalized) throw ContractViolation("reconstruct_phase: magnitude must be denormalized");
  require_tf_shape(mag.values, "reconstruct_phase");
  const int half = std::clamp(opts.kernel_bins, 0, LwsKernel::kMaxBins);
  const auto& kernel = lws_kernel();
  const TfMatrix amp = mag.values.exp();

  Eigen::ArrayXXcd x(kNumBins, kNumFrames);
  for (int c = 0; c < kNumFrames; ++c) {
    for (int r = 0; r < kNumBins; ++r) {
      const double ph = opts.initial_phase ? opts.initial_phase->values(r, c) : 0.0;
      x(r, c) = std::polar(amp(r, c), ph);
    }
  }
  const bool has_fixed = opts.fixed.has_value() && opts.initial_phase.has_value();

  // Hermitian extension along frequency so edge bins see their mirror images.
  const int ext_bins = kNumBins + 2 * half + 1;
  Eigen::ArrayXXcd ext(ext_bins, kNumFrames + 2);
  auto extend = [&] {
    ext.setZero();
    for (int c = 0; c < kNumFrames; ++c) {
      for (int g = -half; g < kNumBins + half + 1; ++g) {
        std::complex<double> v;
        if (g < 0) {
          v = std::conj(x(-g, c));
        } else if (g < kNumBins) {
          v = x(g, c);
        } else if (g == kNumBins) {
          v = 0.0;  // Nyquist is dropped by the analysis
        } else {
          v = std::conj(x(2 * kNumBins - g, c));
        }
        ext(g + half, c + 1) = v;
      }
    }
  };

  PhaseResult result;
  Eigen::ArrayXXcd next(kNumBins, kNumFrames);
  for (int it = 0; it < opts.iterations; ++it) {
    extend();
    for (int c = 0; c < kNumFrames; ++c) {
      for (int r = 0; r < kNumBins; ++r) {
        std::complex<double> acc = 0.0;
        for (int q = -1; q <= 1; ++q) {
          for (int l = -half; l <= half; ++l) {
            // Source bin (r - l, c - q) feeds target (r, c) with offset (q, l).
            const int src_bin = r - l;
            const int parity = ((src_bin % 2) + 2) % 2;
            acc += kernel.k[parity][q + 1][l + LwsKernel::kMaxBins] *
                   ext(src_bin + half, c - q + 1);
          }
        }
        next(r, c) = acc;
      }
    }
    for (int c = 0; c < kNumFrames; ++c) {
      for (int r = 0; r < kNumBins; ++r) {
        if (has_fixed && (*opts.fixed)(r, c)) continue;
        const double a = std::abs(next(r, c));
        if (a > 1e-300) x(r, c) = amp(r, c) * (next(r, c) / a);
      }
    }
    if (opts.track_convergence) {
      PhaseMatrix ph = phase_of(ComplexSpectrogram{x});
      result.convergence.push_back(spectral_convergence(mag, ph));
    }
  }
  result.phase = phase_of(ComplexSpectrogram{x});
  return result;
}

// ---------------------------------------------------------------------------

LogMagnitude speech_shaped_noise_fill(const LogMagnitude& orig, const ValidMap& valid,
                                      std::uint64_t seed) {
  if (orig.normalized) {
    throw ContractViolation("speech_shaped_noise_fill: original must be denormalized");
  }
  if (valid.rows() != orig.values.rows() || valid.cols() != orig.values.cols()) {
    throw ContractViolation("speech_shaped_noise_fill: mask shape mismatch");
  }
  const Eigen::ArrayXd log_power = (2.0 * orig.values).exp().rowwise().mean().log();
  LogMagnitude out = orig;
  Rng rng(seed);
  std::exponential_distribution<double> unit_exp(1.0);
  const double floor = std::log(kLogFloor);
  for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
    for (Eigen::Index r = 0; r < out.values.rows(); ++r) {
      if (valid(r, c)) continue;
      // |z|^2 of a circular complex Gaussian with power P is P * Exp(1).
      const double e = unit_exp(rng);
      out.values(r, c) = std::max(0.5 * (log_power[r] + std::log(e)), floor);
    }
  }
  return out;
}

}  // namespace sinpaint
