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

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sinpaint/dsp.hpp"
#include "sinpaint/lpc.hpp"
#include "sinpaint/mask.hpp"
#include "sinpaint/metrics.hpp"
#include "sinpaint/nn.hpp"
#include "sinpaint/unet.hpp"

using namespace sinpaint;

namespace {

Waveform test_segment() {
  Waveform w;
  w.samples.resize(kSegmentSamples);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double t = double(i) / kSampleRate;
    w.samples[i] = 0.3 * std::sin(2 * std::numbers::pi * 180 * t) * (1 + std::sin(2 * std::numbers::pi * 3 * t)) +
                   0.1 * std::sin(2 * std::numbers::pi * 1300 * t) + noise(rng);
  }
  return w;
}

nn::Tensor random_tensor(nn::Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  nn::Tensor t(s);
  for (double& v : t.data) v = d(rng);
  return t;
}

void BM_Stft(benchmark::State& state) {
  const Waveform w = test_segment();
  for (auto _ : state) benchmark::DoNotOptimize(stft(w));
}
BENCHMARK(BM_Stft);

void BM_Istft(benchmark::State& state) {
  const ComplexSpectrogram s = stft(test_segment());
  for (auto _ : state) benchmark::DoNotOptimize(istft(s));
}
BENCHMARK(BM_Istft);

void BM_PhaseReconstruction(benchmark::State& state) {
  const LogMagnitude m = log_magnitude(stft(test_segment()));
  PhaseOptions opts;
  opts.iterations = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(reconstruct_phase(m, opts));
}
BENCHMARK(BM_PhaseReconstruction)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const nn::Tensor x = random_tensor({1, c, 64, 64}, 1);
  const nn::Tensor w = random_tensor({c, c, 3, 3}, 2);
  const nn::Tensor b(nn::Shape{1, c, 1, 1});
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, b, 1));
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_PartialConv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const nn::Tensor x = random_tensor({1, c, 64, 64}, 1);
  nn::Tensor m(nn::Shape{1, 1, 64, 64}, 1.0);
  for (int i = 0; i < 64; ++i) m.at(0, 0, i, 20) = 0.0;
  const nn::Tensor w = random_tensor({c, c, 3, 3}, 2);
  const nn::Tensor b(nn::Shape{1, c, 1, 1});
  for (auto _ : state) benchmark::DoNotOptimize(nn::partial_conv2d(x, m, w, b, 1));
}
BENCHMARK(BM_PartialConv2d)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_UNetInpaint(benchmark::State& state) {
  UNetConfig cfg;
  cfg.filter_scale = 0.25;
  const UNet net(cfg, 1);
  const Mask mask = sample_mask({MaskKind::TimeFreq, 0.2, 3});
  LogMagnitude in{TfMatrix::Random(kNumBins, kNumFrames), true};
  for (auto _ : state) benchmark::DoNotOptimize(inpaint(net, in, &mask.valid));
}
BENCHMARK(BM_UNetInpaint)->Unit(benchmark::kMillisecond);

void BM_Stoi(benchmark::State& state) {
  const Waveform ref = test_segment();
  Waveform deg = ref;
  for (std::size_t i = 0; i < deg.size(); i += 7) deg.samples[i] *= 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(stoi(ref, deg));
}
BENCHMARK(BM_Stoi)->Unit(benchmark::kMillisecond);

void BM_LpcGap(benchmark::State& state) {
  const Waveform w = test_segment();
  const SampleInterval gap{8000, 8000 + 1600};
  for (auto _ : state) benchmark::DoNotOptimize(extrapolate_gap(w, gap, LpcConfig{}));
}
BENCHMARK(BM_LpcGap)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
