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

#include <fstream>
#include <set>

#include "sinpaint/error.hpp"
#include "sinpaint/training.hpp"
#include "test_support.hpp"

using namespace sinpaint;
using sinpaint::testing::ScratchDir;

namespace {

SegmentSet random_segments(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  SegmentSet s;
  for (std::size_t i = 0; i < n; ++i) {
    LogMagnitude m{TfMatrix(kNumBins, kNumFrames), true};
    for (Eigen::Index k = 0; k < m.values.size(); ++k) m.values(k) = dist(rng);
    s.ids.push_back("u/" + std::to_string(i));
    s.clean.push_back(std::move(m));
  }
  return s;
}

TrainConfig tiny_inpainter() {
  TrainConfig c = TrainConfig::defaults(TrainPhase::TrainInpainter);
  c.set("loss", "pixel");
  c.set("filter_scale", "0.0625");
  c.set("batch_size", "2");
  c.set("epochs", "2");
  c.set("seed", "9");
  return c;
}

bool same_params(const nn::ParamStore& a, const nn::ParamStore& b) {
  const auto ta = a.tensors(), tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (const auto& [name, t] : ta) {
    const auto it = tb.find(name);
    if (it == tb.end() || it->second.data != t.data) return false;
  }
  return true;
}

std::vector<double> losses(InpainterTrainer& t, int steps) {
  std::vector<double> out;
  for (int i = 0; i < steps && !t.finished(); ++i) out.push_back(t.step());
  return out;
}

}  // namespace

TEST_CASE("config defaults, overrides and validation", "[training]") {
  const auto pre = TrainConfig::defaults(TrainPhase::PretrainVGG);
  const auto inp = TrainConfig::defaults(TrainPhase::TrainInpainter);
  CHECK(pre.lr == 5e-5);
  CHECK(pre.epochs == 50);
  CHECK(inp.lr == 2e-4);
  CHECK(inp.epochs == 30);
  CHECK(inp.batch_size == 16);
  CHECK(inp.loss == LossKind::DeepFeature);

  TrainConfig c = inp;
  c.set("lr", "1e-3");
  c.set("mode", "blind");
  c.set("fill", "additive");
  c.set("augment", "off");
  CHECK(c.lr == 1e-3);
  CHECK(c.mode == UNetMode::Blind);
  CHECK(c.fill == FillMode::AdditiveNoise);
  CHECK_FALSE(c.augment);
  CHECK_THROWS_AS(c.set("learning_rate", "1"), ContractViolation);
  CHECK_THROWS_AS(c.set("epochs", "many"), ContractViolation);
  CHECK_THROWS_AS(c.set("loss", "mse"), ContractViolation);

  TrainConfig bad = inp;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = inp;
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("config hash tracks learning-relevant fields only", "[training]") {
  TrainConfig a = TrainConfig::defaults(TrainPhase::TrainInpainter);
  TrainConfig b = a;
  b.set("workers", "4");
  CHECK(a.hash() == b.hash());
  b.set("seed", "1");
  CHECK(a.hash() != b.hash());
}

TEST_CASE("config file and run config round trip", "[training]") {
  ScratchDir dir("config");
  {
    std::ofstream out(dir / "run.cfg");
    out << "# comment\nepochs = 3\n\nlr=0.001  # trailing\nmode = blind\n";
  }
  const TrainConfig c = read_train_config(dir / "run.cfg", TrainPhase::TrainInpainter);
  CHECK(c.epochs == 3);
  CHECK(c.lr == 0.001);
  CHECK(c.mode == UNetMode::Blind);

  write_run_config(dir / "written.cfg", c);
  const TrainConfig back = read_train_config(dir / "written.cfg", TrainPhase::TrainInpainter);
  CHECK(back.entries() == c.entries());
  CHECK(back.hash() == c.hash());

  {
    std::ofstream out(dir / "bad.cfg");
    out << "epochs 3\n";
  }
  CHECK_THROWS_AS(read_train_config(dir / "bad.cfg", TrainPhase::TrainInpainter), ContractViolation);
  CHECK_THROWS_AS(read_train_config(dir / "absent.cfg", TrainPhase::TrainInpainter), DataError);
}

TEST_CASE("training log lines round trip", "[training]") {
  ScratchDir dir("log");
  const std::vector<TrainLogEntry> entries{{1, 1, 0.123456789012345, 2e-4}, {2, 1, 1e-12, 2e-4}};
  {
    std::ofstream out(dir / "log.jsonl");
    for (const auto& e : entries) out << to_json_line(e) << '\n';
  }
  const auto back = read_train_log(dir / "log.jsonl");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].step == entries[i].step);
    CHECK(back[i].epoch == entries[i].epoch);
    CHECK(back[i].loss == entries[i].loss);
    CHECK(back[i].lr == entries[i].lr);
  }
  CHECK(to_json_line(entries[0]).starts_with(R"({"step":1,"epoch":1,"loss":)"));
  {
    std::ofstream out(dir / "bad.jsonl");
    out << "{\"step\":1}\n";
  }
  CHECK_THROWS_AS(read_train_log(dir / "bad.jsonl"), DataError);
}

TEST_CASE("epoch order is a seeded permutation that changes per epoch", "[training]") {
  const auto a = epoch_order(3, 0, 50);
  CHECK(a == epoch_order(3, 0, 50));
  CHECK(a != epoch_order(3, 1, 50));
  CHECK(a != epoch_order(4, 0, 50));
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
  CHECK(epoch_order(3, 0, 0).empty());
}

TEST_CASE("training masks mix both intrusions within the size bounds", "[training]") {
  const TrainConfig c = TrainConfig::defaults(TrainPhase::TrainInpainter);
  int random = 0;
  double sum = 0.0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const MaskSpec s = training_mask_spec(c, 0, static_cast<std::size_t>(i));
    CHECK((s.kind == MaskKind::Random || s.kind == MaskKind::TimeFreq));
    CHECK(s.coverage >= c.mask_size.lower);
    CHECK(s.coverage <= c.mask_size.upper);
    random += s.kind == MaskKind::Random;
    sum += s.coverage;
  }
  CHECK(std::abs(double(random) / n - 0.5) < 0.05);
  CHECK(std::abs(sum / n - c.mask_size.mu) < 0.02);
  const MaskSpec a = training_mask_spec(c, 0, 7), b = training_mask_spec(c, 1, 7);
  CHECK(a.seed != b.seed);
}

TEST_CASE("corruption keeps valid bins and fills masked ones", "[training]") {
  const auto seg = random_segments(1, 2).clean.front();
  const Mask mask = sample_mask({MaskKind::TimeFreq, 0.3, 5});
  const ChannelStats stats{Eigen::ArrayXd::Constant(kNumBins, -5.0),
                           Eigen::ArrayXd::Constant(kNumBins, 2.5)};
  for (FillMode fill : {FillMode::Zeros, FillMode::WhiteNoise, FillMode::AdditiveNoise,
                        FillMode::SpeechShaped}) {
    const auto out = corrupt_normalized(seg, mask, fill, {}, &stats, 1);
    CHECK(out.normalized);
    double max_valid = 0.0;
    for (Eigen::Index i = 0; i < seg.values.size(); ++i) {
      if (mask.valid(i)) max_valid = std::max(max_valid, std::abs(out.values(i) - seg.values(i)));
    }
    CHECK(max_valid < 1e-12);
    if (fill == FillMode::Zeros) {
      for (Eigen::Index i = 0; i < seg.values.size(); ++i) {
        if (!mask.valid(i)) CHECK(out.values(i) == 0.0);
      }
    }
  }
  CHECK_THROWS_AS(corrupt_normalized(seg, mask, FillMode::SpeechShaped, {}, nullptr, 1),
                  ContractViolation);
}

TEST_CASE("inpainter training is deterministic and independent of workers", "[training]") {
  const SegmentSet data = random_segments(5, 1);
  TrainConfig c = tiny_inpainter();
  InpainterTrainer a(c, data, nullptr), b(c, data, nullptr);
  c.set("workers", "3");
  InpainterTrainer w(c, data, nullptr);
  CHECK(a.steps_per_epoch() == 3);
  const auto la = losses(a, 4), lb = losses(b, 4), lw = losses(w, 4);
  CHECK(la == lb);
  CHECK(la == lw);
  for (double l : la) CHECK(std::isfinite(l));
  CHECK(a.epoch() == 1);
  CHECK(a.step_count() == 4);
  CHECK(same_params(a.model().params(), w.model().params()));
}

TEST_CASE("deep-feature training requires an extractor", "[training]") {
  const SegmentSet data = random_segments(2, 1);
  TrainConfig c = tiny_inpainter();
  c.set("loss", "deep-feature");
  CHECK_THROWS_AS(InpainterTrainer(c, data, nullptr), ModelError);
  CHECK_THROWS_AS(InpainterTrainer(tiny_inpainter(), SegmentSet{}, nullptr), DataError);
}

TEST_CASE("resumed inpainter run equals the uninterrupted run", "[training]") {
  ScratchDir dir("resume");
  const SegmentSet data = random_segments(5, 4);
  const TrainConfig c = tiny_inpainter();

  InpainterTrainer full(c, data, nullptr);
  std::vector<double> full_losses;
  full.run({.on_step = [&](const TrainLogEntry& e) { full_losses.push_back(e.loss); }});
  REQUIRE(full.finished());
  REQUIRE(full_losses.size() == 6);
  REQUIRE(full.history().size() == 2);

  std::vector<double> resumed_losses;
  auto record = [&](const TrainLogEntry& e) { resumed_losses.push_back(e.loss); };
  {
    InpainterTrainer first(c, data, nullptr);
    first.run({.on_step = record, .stop_after = 4, .checkpoint_dir = dir.path()});
    CHECK(first.step_count() == 4);
  }
  CHECK(std::filesystem::exists(dir / "run-state.ckpt"));
  InpainterTrainer second(c, data, nullptr);
  second.load_state(dir / "run-state.ckpt");
  CHECK(second.step_count() == 4);
  second.run({.on_step = record});
  CHECK(resumed_losses == full_losses);
  CHECK(same_params(second.model().params(), full.model().params()));
  CHECK(second.history().back().mean_loss == full.history().back().mean_loss);

  TrainConfig other = c;
  other.set("lr", "1e-3");
  InpainterTrainer mismatched(other, data, nullptr);
  CHECK_THROWS_AS(mismatched.load_state(dir / "run-state.ckpt"), ModelError);
}

TEST_CASE("extractor training resumes exactly and reports accuracy", "[training]") {
  ScratchDir dir("vgg");
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<WordSample> samples;
  for (int i = 0; i < 6; ++i) {
    WordSample s;
    s.features = LogMagnitude{TfMatrix(kNumBins, kNumFrames), true};
    for (Eigen::Index k = 0; k < s.features.values.size(); ++k) s.features.values(k) = dist(rng);
    s.label = i % 3;
    s.content_frames = kNumFrames;
    samples.push_back(std::move(s));
  }
  TrainConfig c = TrainConfig::defaults(TrainPhase::PretrainVGG);
  c.set("vgg_width", "0.0625");
  c.set("vgg_hidden", "8");
  c.set("batch_size", "4");
  c.set("epochs", "2");
  const Vocabulary vocab({"aaaa", "bbbb", "cccc"});

  ExtractorTrainer full(c, samples, vocab, &samples);
  std::vector<double> a;
  full.run({.on_step = [&](const TrainLogEntry& e) { a.push_back(e.loss); }});
  REQUIRE(a.size() == 4);
  REQUIRE(full.history().size() == 2);
  REQUIRE(full.history().back().accuracy);
  const double acc = full.accuracy(samples);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(*full.history().back().accuracy == acc);

  std::vector<double> b;
  auto record = [&](const TrainLogEntry& e) { b.push_back(e.loss); };
  {
    ExtractorTrainer first(c, samples, vocab, &samples);
    first.run({.on_step = record, .stop_after = 1, .checkpoint_dir = dir.path()});
  }
  ExtractorTrainer second(c, samples, vocab, &samples);
  second.load_state(dir / "run-state.ckpt");
  second.run({.on_step = record});
  CHECK(b == a);
  CHECK(same_params(second.model().params(), full.model().params()));
}
