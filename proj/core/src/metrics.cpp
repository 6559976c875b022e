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

#include "sinpaint/metrics.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "fft.hpp"
#include "sinpaint/rng.hpp"
#include "sinpaint/wav.hpp"

namespace sinpaint {

namespace {

constexpr int kStoiRate = 10000;
constexpr std::size_t kStoiFrame = 256;
constexpr std::size_t kStoiHop = 128;
constexpr std::size_t kStoiFft = 512;
constexpr int kBands = 15;
constexpr double kMinBandFreq = 150.0;
constexpr std::size_t kSegmentFrames = 30;
constexpr double kClipDb = -15.0;
constexpr double kDynamicRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

std::vector<double> resample_filter(int p, int q) {
  const double cutoff = 1.0 / (2.0 * std::max(p, q));
  const double rolloff = cutoff / 10.0;
  const double rejection_db = 60.0;
  const auto half = static_cast<long>(std::ceil((rejection_db - 8.0) / (28.714 * rolloff)));
  const double beta = 0.1102 * (rejection_db - 8.7);
  const long m = 2 * half + 1;
  const double denom = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(static_cast<std::size_t>(m));
  for (long i = 0; i < m; ++i) {
    const double t = double(i - half);
    const double r = 2.0 * double(i) / double(m - 1) - 1.0;
    const double kaiser = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
    h[static_cast<std::size_t>(i)] = kaiser * 2.0 * p * cutoff * sinc(2.0 * cutoff * t);
  }
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  for (double& v : h) v /= sum;
  return h;
}

// Symmetric Hann without its zero end points.
std::vector<double> matlab_hanning(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i + 1) / double(n + 1));
  }
  return w;
}

void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const auto w = matlab_hanning(kStoiFrame);
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i + kStoiFrame < x.size(); i += kStoiHop) starts.push_back(i);
  if (starts.empty()) {
    x.clear();
    y.clear();
    return;
  }
  std::vector<double> energy(starts.size());
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double acc = 0.0;
    for (std::size_t k = 0; k < kStoiFrame; ++k) {
      const double v = w[k] * x[starts[f] + k];
      acc += v * v;
    }
    energy[f] = 20.0 * std::log10(std::sqrt(acc) + kEps);
  }
  const double top = *std::max_element(energy.begin(), energy.end());
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < starts.size(); ++f) {
    if (top - kDynamicRange - energy[f] < 0.0) kept.push_back(starts[f]);
  }
  const std::size_t length = (kept.size() - 1) * kStoiHop + kStoiFrame;
  std::vector<double> xs(length, 0.0), ys(length, 0.0);
  for (std::size_t f = 0; f < kept.size(); ++f) {
    for (std::size_t k = 0; k < kStoiFrame; ++k) {
      xs[f * kStoiHop + k] += w[k] * x[kept[f] + k];
      ys[f * kStoiHop + k] += w[k] * y[kept[f] + k];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

// Band energies: rows are third-octave bands, columns frames.
Eigen::ArrayXXd band_envelopes(const std::vector<double>& x) {
  static const auto window = matlab_hanning(kStoiFrame);
  struct Band {
    std::size_t lo, hi;
  };
  static const auto bands = [] {
    std::array<Band, kBands> out{};
    const std::size_t bins = kStoiFft / 2 + 1;
    auto nearest = [&](double freq) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < bins; ++b) {
        const double f = double(b) * kStoiRate / double(kStoiFft);
        const double d = (f - freq) * (f - freq);
        if (d < best_d) {
          best_d = d;
          best = b;
        }
      }
      return best;
    };
    for (int k = 0; k < kBands; ++k) {
      out[k].lo = nearest(kMinBandFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0));
      out[k].hi = nearest(kMinBandFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0));
    }
    return out;
  }();

  std::size_t frames = 0;
  for (std::size_t i = 0; i + kStoiFrame < x.size(); i += kStoiHop) ++frames;
  Eigen::ArrayXXd env(kBands, static_cast<Eigen::Index>(frames));
  auto& fft = detail::real_fft(kStoiFft);
  std::vector<double> buf(kStoiFft);
  std::vector<std::complex<double>> spec(kStoiFft / 2 + 1);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t k = 0; k < kStoiFrame; ++k) buf[k] = window[k] * x[f * kStoiHop + k];
    fft.forward(buf, spec);
    for (int b = 0; b < kBands; ++b) {
      double acc = 0.0;
      for (std::size_t j = bands[b].lo; j < bands[b].hi; ++j) acc += std::norm(spec[j]);
      env(b, static_cast<Eigen::Index>(f)) = std::sqrt(acc);
    }
  }
  return env;
}

}  // namespace

std::vector<double> resample_poly(std::span<const double> x, int up, int down) {
  if (up <= 0 || down <= 0) throw ContractViolation("resample_poly: factors must be positive");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return {x.begin(), x.end()};
  std::vector<double> h = resample_filter(up, down);
  for (double& v : h) v *= up;
  const long half = static_cast<long>(h.size() - 1) / 2;
  const long pre_pad = down - half % down;
  const long pre_remove = (half + pre_pad) / down;
  const long n_in = static_cast<long>(x.size());
  const long n_out = (n_in * up + down - 1) / down;
  const long taps = static_cast<long>(h.size());
  std::vector<double> out(static_cast<std::size_t>(n_out), 0.0);
  for (long m = 0; m < n_out; ++m) {
    // Position in the zero-stuffed input convolved with the padded filter.
    const long pos = (m + pre_remove) * down;
    long i_lo = (pos - pre_pad - taps + 1 + up - 1);
    i_lo = i_lo <= 0 ? 0 : i_lo / up;
    const long i_hi = std::min(n_in - 1, (pos - pre_pad) >= 0 ? (pos - pre_pad) / up : -1);
    double acc = 0.0;
    for (long i = i_lo; i <= i_hi; ++i) {
      const long j = pos - i * up - pre_pad;
      if (j >= 0 && j < taps) acc += x[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(m)] = acc;
  }
  return out;
}

double stoi(const Waveform& reference, const Waveform& degraded) {
  if (reference.size() != degraded.size()) {
    throw ContractViolation("stoi: reference and degraded lengths differ");
  }
  if (reference.rate != degraded.rate || reference.rate <= 0) {
    throw ContractViolation("stoi: sample rates differ");
  }
  std::vector<double> x = resample_poly(reference.samples, kStoiRate, reference.rate);
  std::vector<double> y = resample_poly(degraded.samples, kStoiRate, reference.rate);
  remove_silent_frames(x, y);

  const Eigen::ArrayXXd xe = band_envelopes(x);
  const Eigen::ArrayXXd ye = band_envelopes(y);
  const auto frames = static_cast<std::size_t>(xe.cols());
  if (frames < kSegmentFrames) return 1e-5;

  const double clip = std::pow(10.0, -kClipDb / 20.0);
  const auto n = static_cast<Eigen::Index>(kSegmentFrames);
  double total = 0.0;
  const std::size_t segments = frames - kSegmentFrames + 1;
  for (std::size_t s = 0; s < segments; ++s) {
    for (Eigen::Index b = 0; b < kBands; ++b) {
      Eigen::ArrayXd xs = xe.row(b).segment(static_cast<Eigen::Index>(s), n).transpose();
      Eigen::ArrayXd ys = ye.row(b).segment(static_cast<Eigen::Index>(s), n).transpose();
      const double alpha = std::sqrt(xs.square().sum()) / (std::sqrt(ys.square().sum()) + kEps);
      ys = (ys * alpha).min(xs * (1.0 + clip));
      ys -= ys.mean();
      xs -= xs.mean();
      ys /= std::sqrt(ys.square().sum()) + kEps;
      xs /= std::sqrt(xs.square().sum()) + kEps;
      total += (ys * xs).sum();
    }
  }
  return total / double(segments * kBands);
}

ExternalPesqBackend::ExternalPesqBackend(std::vector<std::string> command,
                                         std::chrono::milliseconds timeout, std::string scale)
    : command_(std::move(command)), timeout_(timeout), scale_(std::move(scale)) {
  if (command_.empty()) throw ContractViolation("PESQ backend command is empty");
}

double ExternalPesqBackend::score(const Waveform& reference, const Waveform& degraded) const {
  namespace fs = std::filesystem;
  const auto tag = std::to_string(::getpid()) + "-" +
                   std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "-" +
                   std::to_string(std::chrono::steady_clock::now().time_since_epoch().count());
  const fs::path dir = fs::temp_directory_path() / ("sinpaint-pesq-" + tag);
  fs::create_directories(dir);
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{dir};
  const fs::path ref_path = dir / "ref.wav", deg_path = dir / "deg.wav";
  write_wav(ref_path, reference);
  write_wav(deg_path, degraded);

  std::vector<std::string> args = command_;
  args.push_back(ref_path.string());
  args.push_back(deg_path.string());
  args.push_back(std::to_string(reference.rate));
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  int fds[2];
  if (::pipe(fds) != 0) throw PesqError("PESQ backend: pipe failed");
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw PesqError("PESQ backend: fork failed");
  }
  if (pid == 0) {
    ::dup2(fds[1], STDOUT_FILENO);
    ::close(fds[0]);
    ::close(fds[1]);
    const int devnull = ::open("/dev/null", O_WRONLY);
    if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  ::close(fds[1]);

  std::string output;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  bool timed_out = false;
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{fds[0], POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) {
      timed_out = ready == 0;
      break;
    }
    char buf[256];
    const ssize_t got = ::read(fds[0], buf, sizeof buf);
    if (got <= 0) break;
    output.append(buf, static_cast<std::size_t>(got));
  }
  ::close(fds[0]);
  if (timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  if (timed_out) throw PesqError("PESQ backend timed out");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw PesqError("PESQ backend exited with failure status");
  }
  char* end = nullptr;
  const double value = std::strtod(output.c_str(), &end);
  if (end == output.c_str() || !std::isfinite(value)) {
    throw PesqError("PESQ backend printed no score");
  }
  return value;
}

std::optional<double> pesq(const Waveform& reference, const Waveform& degraded,
                           const PesqBackend* backend) {
  if (backend == nullptr) return std::nullopt;
  return backend->score(reference, degraded);
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / double(s.n);
  double var = 0.0;
  for (double v : sorted) var += (v - mean) * (v - mean);
  s.mean = mean;
  s.std = std::sqrt(var / double(s.n));
  return s;
}

}  // namespace sinpaint
