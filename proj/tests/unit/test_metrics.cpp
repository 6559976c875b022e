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

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <string>

#include "sinpaint/metrics.hpp"
#include "sinpaint/wav.hpp"
#include "test_support.hpp"

using namespace sinpaint;
using Catch::Approx;

namespace {

const std::filesystem::path kStoiFixture = std::filesystem::path(SINPAINT_TEST_DATA) / "stoi";

Waveform noisy(const Waveform& x, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  Waveform y = x;
  for (double& v : y.samples) v += g(rng);
  return y;
}

}  // namespace

TEST_CASE("stoi of a signal with itself is one", "[metrics][stoi]") {
  for (const auto& seg : testing::speech_segments(31, 3)) {
    CHECK(stoi(seg, seg) == Approx(1.0).margin(1e-3));
  }
}

TEST_CASE("stoi matches the frozen reference fixture", "[metrics][stoi]") {
  std::ifstream in(kStoiFixture / "expected.txt");
  REQUIRE(in);
  std::string name;
  double expected = 0.0;
  int pairs = 0;
  while (in >> name >> expected) {
    const auto ref = read_wav(kStoiFixture / (name + "_ref.wav"));
    const auto deg = read_wav(kStoiFixture / (name + "_deg.wav"));
    INFO(name);
    CHECK(stoi(ref, deg) == Approx(expected).margin(1e-4));
    ++pairs;
  }
  CHECK(pairs == 10);
}

TEST_CASE("stoi decreases as noise grows", "[metrics][stoi]") {
  const auto seg = testing::speech_segments(32, 1).front();
  double prev = 1.1;
  for (double sigma : {0.001, 0.01, 0.03, 0.1}) {
    const double s = stoi(seg, noisy(seg, sigma, 1));
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("stoi rejects mismatched inputs", "[metrics][stoi]") {
  const auto seg = testing::speech_segments(33, 1).front();
  Waveform shorter = seg;
  shorter.samples.resize(seg.size() - 10);
  CHECK_THROWS_AS(stoi(seg, shorter), ContractViolation);
  Waveform silent;
  silent.samples.assign(seg.size(), 0.0);
  // Nothing to correlate against.
  CHECK(stoi(silent, seg) < 0.01);
}

TEST_CASE("resampling preserves an in-band tone", "[metrics][resample]") {
  const auto x = testing::tones(16000, {{700.0, 0.5, 0.4}});
  const auto y = resample_poly(x.samples, 5, 8);
  REQUIRE(y.size() == 10000);
  double worst = 0.0;
  for (std::size_t n = 500; n < 9500; ++n) {
    const double t = double(n) / 10000.0;
    const double want = 0.5 * std::sin(2.0 * std::numbers::pi * 700.0 * t + 0.4);
    worst = std::max(worst, std::abs(y[n] - want));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("resampling removes content above the new Nyquist", "[metrics][resample]") {
  const auto x = testing::tones(16000, {{6500.0, 0.5}});
  const auto y = resample_poly(x.samples, 5, 8);
  double energy = 0.0;
  for (std::size_t n = 500; n < 9500; ++n) energy += y[n] * y[n];
  CHECK(std::sqrt(energy / 9000.0) < 0.01);
}

TEST_CASE("summaries are order independent", "[metrics]") {
  std::vector<double> v{0.3, 0.9, 0.1, 0.5, 0.7};
  const Summary a = summarize(v);
  std::reverse(v.begin(), v.end());
  const Summary b = summarize(v);
  CHECK(a.n == 5);
  CHECK(a.mean == b.mean);
  CHECK(a.std == b.std);
  CHECK(a.mean == Approx(0.5));
  CHECK(a.std == Approx(std::sqrt(0.08)));
  CHECK(summarize({}).n == 0);
}

TEST_CASE("external PESQ backend contract", "[metrics][pesq]") {
  const auto seg = testing::speech_segments(34, 1).front();

  SECTION("parses the printed score") {
    ExternalPesqBackend b({"/bin/sh", "-c", "echo 3.25", "pesq"}, std::chrono::seconds(5));
    CHECK(b.score(seg, seg) == 3.25);
    CHECK(b.scale() == "mos-lqo");
    CHECK(pesq(seg, seg, &b) == 3.25);
  }
  SECTION("receives reference, degraded and rate") {
    ExternalPesqBackend b({"/bin/sh", "-c", "test -s \"$1\" && test -s \"$2\" && echo \"$3\"", "pesq"},
                          std::chrono::seconds(5));
    CHECK(b.score(seg, seg) == 16000.0);
  }
  SECTION("failures raise PesqError") {
    ExternalPesqBackend garbage({"/bin/sh", "-c", "echo n/a", "pesq"}, std::chrono::seconds(5));
    CHECK_THROWS_AS(garbage.score(seg, seg), PesqError);
    ExternalPesqBackend failing({"/bin/sh", "-c", "exit 3", "pesq"}, std::chrono::seconds(5));
    CHECK_THROWS_AS(failing.score(seg, seg), PesqError);
    ExternalPesqBackend missing({"/nonexistent/pesq-binary"}, std::chrono::seconds(5));
    CHECK_THROWS_AS(missing.score(seg, seg), PesqError);
  }
  SECTION("slow backends are killed at the timeout") {
    ExternalPesqBackend slow({"/bin/sh", "-c", "sleep 10", "pesq"}, std::chrono::milliseconds(200));
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(slow.score(seg, seg), PesqError);
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(5));
  }
  SECTION("no backend means no score") {
    CHECK_FALSE(pesq(seg, seg, nullptr).has_value());
  }
  CHECK_THROWS_AS(ExternalPesqBackend({}, std::chrono::seconds(1)), ContractViolation);
}

#ifdef SINPAINT_PESQ_SCRIPT
TEST_CASE("bundled PESQ backend scores speech", "[metrics][pesq][python]") {
  if (std::system("python3 -c 'import pesq, numpy' >/dev/null 2>&1") != 0) {
    SKIP("python pesq package not installed");
  }
  const auto seg = testing::speech_segments(35, 1).front();
  ExternalPesqBackend b({"python3", SINPAINT_PESQ_SCRIPT}, std::chrono::seconds(30));
  const double same = b.score(seg, seg);
  const double worse = b.score(seg, noisy(seg, 0.05, 2));
  CHECK(same > 4.0);
  CHECK(worse < same);
  CHECK(worse >= -0.5);
}
#endif
