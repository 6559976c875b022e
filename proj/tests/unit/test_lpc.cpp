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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sinpaint/error.hpp"
#include "sinpaint/lpc.hpp"
#include "test_support.hpp"

using namespace sinpaint;

TEST_CASE("fit_lpc predicts a pure sinusoid", "[lpc]") {
  const auto x = testing::tones(2048, {{523.0, 0.7, 0.3}});
  for (int order : {2, 8, 32}) {
    const auto fit = fit_lpc(std::span(x.samples).first(1024), order);
    REQUIRE(fit.coeffs.size() == std::size_t(order));
    double worst = 0.0;
    for (std::size_t n = 1024; n < 1100; ++n) {
      const double p = predict_next(fit, std::span(x.samples).first(n));
      worst = std::max(worst, std::abs(p - x.samples[n]));
    }
    CHECK(worst < 1e-6 * 0.7);
  }
}

TEST_CASE("fit_lpc: order two recovers the resonator recursion", "[lpc]") {
  // x[n] = 2 cos(w) x[n-1] - x[n-2] for any sinusoid of frequency w.
  const double w = 2.0 * std::numbers::pi * 300.0 / kSampleRate;
  const auto x = testing::tones(600, {{300.0, 1.0, 0.2}});
  const auto fit = fit_lpc(x.samples, 2);
  CHECK(fit.coeffs[0] == Catch::Approx(2.0 * std::cos(w)).epsilon(1e-8));
  CHECK(fit.coeffs[1] == Catch::Approx(-1.0).epsilon(1e-8));
}

TEST_CASE("fit_lpc edge cases", "[lpc]") {
  std::vector<double> zeros(256, 0.0);
  const auto fit = fit_lpc(zeros, 16);
  CHECK(fit.degenerate);
  CHECK(predict_next(fit, zeros) == 0.0);
  CHECK_THROWS_AS(fit_lpc(std::span(zeros).first(10), 16), ContractViolation);
  CHECK_THROWS_AS(fit_lpc(zeros, 0), ContractViolation);
  CHECK_THROWS_AS(predict_next(fit, std::span(zeros).first(4)), ContractViolation);
}

TEST_CASE("predictor is stable on noise", "[lpc]") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.1);
  Waveform w;
  w.samples.resize(8000);
  for (double& v : w.samples) v = g(rng);
  const auto out = extrapolate_gap(w, {3000, 5000}, LpcConfig{});
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  for (std::size_t i = 3000; i < 5000; ++i) REQUIRE(std::abs(out.samples[i]) <= 10.0 * peak);
}

TEST_CASE("a 100 ms gap in a stationary signal restores above 20 dB", "[lpc]") {
  const std::vector<std::vector<testing::Partial>> signals = {
      {{440.0, 0.5}},
      {{200.0, 0.3}, {410.0, 0.2, 1.0}, {1330.0, 0.1, 2.0}},
      {{150.0, 0.2}, {300.0, 0.15, 0.5}, {450.0, 0.1, 1.5}, {600.0, 0.05, 2.5}, {2400.0, 0.02}},
  };
  for (const auto& partials : signals) {
    Waveform w = testing::tones(kSegmentSamples, partials);
    const Waveform clean = w;
    const SampleInterval gap{6000, 7600};
    for (std::size_t i = gap.start; i < gap.end; ++i) w.samples[i] = 0.0;
    const auto out = extrapolate_gap(w, gap, LpcConfig{});
    const double snr = testing::snr_db(std::span(clean.samples).subspan(gap.start, 1600),
                                       std::span(out.samples).subspan(gap.start, 1600));
    CHECK(snr >= 20.0);
    // Samples outside the gap are untouched.
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (i < gap.start || i >= gap.end) REQUIRE(out.samples[i] == w.samples[i]);
    }
  }
}

TEST_CASE("one-sided context falls back to a single predictor", "[lpc]") {
  Waveform w = testing::tones(6000, {{700.0, 0.4}});
  const Waveform clean = w;
  for (std::size_t i = 0; i < 1000; ++i) w.samples[i] = 0.0;
  const auto out = extrapolate_gap(w, {0, 1000}, LpcConfig{});
  CHECK(testing::snr_db(std::span(clean.samples).first(1000), std::span(out.samples).first(1000)) > 20.0);

  Waveform tiny = testing::tones(10, {{700.0, 0.4}});
  CHECK_THROWS_AS(extrapolate_gap(tiny, {1, 9}, LpcConfig{}), ContractViolation);
  CHECK_THROWS_AS(extrapolate_gap(w, {10, 7000}, LpcConfig{}), ContractViolation);
}

TEST_CASE("short context lowers the order instead of failing", "[lpc]") {
  Waveform w = testing::tones(4000, {{500.0, 0.4}});
  const Waveform clean = w;
  for (std::size_t i = 60; i < 400; ++i) w.samples[i] = 0.0;
  const auto out = extrapolate_gap(w, {60, 400}, LpcConfig{});
  CHECK(testing::snr_db(std::span(clean.samples).subspan(60, 340), std::span(out.samples).subspan(60, 340)) > 20.0);
}

TEST_CASE("inpaint_gaps handles several gaps in order", "[lpc]") {
  Waveform w = testing::tones(kSegmentSamples, {{250.0, 0.3}, {900.0, 0.2, 1.0}});
  const Waveform clean = w;
  const std::vector<SampleInterval> gaps{{2000, 2800}, {4000, 5200}, {12000, 12640}};
  for (auto g : gaps) {
    for (std::size_t i = g.start; i < g.end; ++i) w.samples[i] = 0.0;
  }
  const auto out = inpaint_gaps(w, gaps, LpcConfig{});
  for (auto g : gaps) {
    CHECK(testing::snr_db(std::span(clean.samples).subspan(g.start, g.end - g.start),
                          std::span(out.samples).subspan(g.start, g.end - g.start)) > 20.0);
  }
  const std::vector<SampleInterval> unsorted{{4000, 5200}, {2000, 2800}};
  CHECK_THROWS_AS(inpaint_gaps(w, unsorted, LpcConfig{}), ContractViolation);
}

TEST_CASE("inpaint_time_masks follows the mask's frame gaps", "[lpc]") {
  Waveform w = testing::tones(kSegmentSamples, {{330.0, 0.3}});
  Mask m = Mask::all_valid({MaskKind::Time, 0.1, 0});
  m.valid.middleCols(50, 10).setConstant(false);
  const auto direct = inpaint_gaps(w, mask_to_time_gaps(m), LpcConfig{});
  const auto via_mask = inpaint_time_masks(w, m, LpcConfig{});
  CHECK(direct.samples == via_mask.samples);

  const Mask r = sample_mask({MaskKind::Random, 0.2, 1});
  CHECK_THROWS_AS(inpaint_time_masks(w, r, LpcConfig{}), UnsupportedError);
}

TEST_CASE("crossfade length controls the blend region", "[lpc]") {
  // A phase jump across the gap makes the two predictors disagree.
  Waveform w;
  w.samples.assign(4000, 0.0);
  for (std::size_t i = 0; i < 1500; ++i) w.samples[i] = std::sin(0.05 * double(i));
  for (std::size_t i = 2500; i < 4000; ++i) w.samples[i] = std::sin(0.05 * double(i) + 1.0);
  LpcConfig cfg;
  cfg.order = 16;
  cfg.crossfade = 200;
  const auto short_fade = extrapolate_gap(w, {1500, 2500}, cfg);
  cfg.crossfade = 0;
  const auto long_fade = extrapolate_gap(w, {1500, 2500}, cfg);
  // Outside the centered 200-sample fade, the short fade is pure forward or backward.
  CHECK(short_fade.samples[1550] != long_fade.samples[1550]);
  CHECK(short_fade.samples[2000] == Catch::Approx(long_fade.samples[2000]).margin(0.5));
}
