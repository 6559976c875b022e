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

// Acceptance checks. Prints one PASS/FAIL line per requested criterion and
// exits non-zero when any of them fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "sinpaint/corpus.hpp"
#include "sinpaint/evaluation.hpp"
#include "sinpaint/feature_loss.hpp"
#include "sinpaint/lpc.hpp"
#include "sinpaint/metrics.hpp"
#include "sinpaint/nn.hpp"
#include "sinpaint/training.hpp"
#include "sinpaint/wav.hpp"

namespace fs = std::filesystem;
using namespace sinpaint;
using nn::Shape;
using nn::Tensor;

namespace {

struct Options {
  fs::path data;
  fs::path work;
  fs::path fixtures = SINPAINT_TEST_DATA;
  std::string pesq_command;
  int workers = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

void progress(const std::string& msg) { std::cerr << "  " << msg << std::endl; }

EvalDataset dev_segments(const Options& o, std::size_t n) {
  return load_eval_segments(read_manifest(o.data / "manifest-dev.jsonl"), n);
}

EvalConfig eval_config(const Options& o) {
  EvalConfig c;
  c.workers = o.workers;
  return c;
}

std::unique_ptr<PesqBackend> pesq_backend(const Options& o) {
  std::vector<std::string> cmd;
  std::istringstream words(o.pesq_command);
  for (std::string w; words >> w;) cmd.push_back(w);
  if (cmd.empty()) return nullptr;
  return std::make_unique<ExternalPesqBackend>(cmd, std::chrono::seconds(60));
}

const std::vector<double> kSizes{0.1, 0.2, 0.3, 0.4};
const std::vector<MaskKind> kKinds{MaskKind::Time, MaskKind::TimeFreq, MaskKind::Random};

const EvalRecord& find_record(const std::vector<EvalRecord>& recs, MaskKind k, double size,
                              const std::string& scenario) {
  for (const auto& r : recs) {
    if (r.condition.intrusion == k && r.condition.size == size &&
        r.condition.scenario.name() == scenario) {
      return r;
    }
  }
  throw std::runtime_error("missing record");
}

// Gaps scores over the full grid against reference values.
Outcome criterion1(const Options& o) {
  struct Target {
    double stoi, pesq;
  };
  const std::map<MaskKind, std::vector<Target>> target{
      {MaskKind::Time, {{0.893, 2.561}, {0.772, 1.872}, {0.641, 1.476}, {0.536, 1.154}}},
      {MaskKind::TimeFreq, {{0.869, 2.423}, {0.729, 1.790}, {0.598, 1.391}, {0.484, 1.053}}},
      {MaskKind::Random, {{0.880, 2.842}, {0.809, 2.233}, {0.713, 1.690}, {0.644, 1.355}}},
  };
  const auto pesq = pesq_backend(o);
  if (!pesq) return {false, "no PESQ backend configured"};
  const EvalDataset data = dev_segments(o, 300);
  if (data.size() < 300) return {false, fmt::format("only {} dev segments", data.size())};
  EvalConfig cfg = eval_config(o);
  cfg.pesq = pesq.get();
  progress(fmt::format("scoring 12 conditions on {} segments", data.size()));
  const auto recs = run_grid(make_grid(kKinds, kSizes, {Scenario::parse("gaps")}), data, {}, cfg);

  int misses = 0;
  std::string detail;
  for (MaskKind k : kKinds) {
    for (std::size_t i = 0; i < kSizes.size(); ++i) {
      const EvalRecord& r = find_record(recs, k, kSizes[i], "gaps");
      const Target& t = target.at(k)[i];
      const bool stoi_ok = r.stoi.n > 0 && std::abs(r.stoi.mean - t.stoi) <= 0.05;
      const bool pesq_ok = r.pesq && std::abs(r.pesq->mean - t.pesq) <= 0.15;
      misses += !(stoi_ok && pesq_ok);
      progress(fmt::format("{} {:.0f}%: STOI {:.3f} (target {:.3f}){} PESQ {} (target {:.3f}){}",
                           to_string(k), kSizes[i] * 100, r.stoi.mean, t.stoi, stoi_ok ? "" : " off",
                           r.pesq ? fmt::format("{:.3f}", r.pesq->mean) : "NA", t.pesq,
                           pesq_ok ? "" : " off"));
      if (!(stoi_ok && pesq_ok)) {
        detail += fmt::format(" {}/{:.0f}%", to_string(k), kSizes[i] * 100);
      }
    }
  }
  if (misses == 0) return {true, fmt::format("12/12 cells within tolerance on {} segments", data.size())};
  return {false, fmt::format("{}/12 cells outside tolerance:{}", misses, detail)};
}

// STOI falls strictly as masks grow, for gaps and noise filling.
Outcome criterion2(const Options& o) {
  const EvalDataset data = dev_segments(o, 100);
  if (data.size() < 100) return {false, fmt::format("only {} dev segments", data.size())};
  const std::vector<Scenario> scen{Scenario::parse("gaps"), Scenario::parse("noise")};
  progress(fmt::format("scoring 24 conditions on {} segments", data.size()));
  const auto recs = run_grid(make_grid(kKinds, kSizes, scen), data, {}, eval_config(o));
  std::string broken;
  for (const auto& s : scen) {
    for (MaskKind k : kKinds) {
      std::string line = s.name() + " " + to_string(k) + ":";
      double prev = 2.0;
      bool ok = true;
      for (double size : kSizes) {
        const double v = find_record(recs, k, size, s.name()).stoi.mean;
        line += fmt::format(" {:.3f}", v);
        ok = ok && v < prev;
        prev = v;
      }
      progress(line);
      if (!ok) broken += " " + s.name() + "/" + to_string(k);
    }
  }
  if (broken.empty()) return {true, "6/6 series strictly decreasing"};
  return {false, "not strictly decreasing:" + broken};
}

// LPC beats gaps on time masks; a 100 ms gap in a stationary signal is restored.
Outcome criterion3(const Options& o) {
  const EvalDataset data = dev_segments(o, 100);
  const std::vector<Scenario> scen{Scenario::parse("gaps"), Scenario::parse("lpc")};
  progress(fmt::format("scoring 8 conditions on {} segments", data.size()));
  const auto recs = run_grid(make_grid({MaskKind::Time}, kSizes, scen), data, {}, eval_config(o));
  bool better = true;
  std::string margins;
  for (double size : kSizes) {
    const double g = find_record(recs, MaskKind::Time, size, "gaps").stoi.mean;
    const double l = find_record(recs, MaskKind::Time, size, "lpc").stoi.mean;
    progress(fmt::format("time {:.0f}%: gaps {:.3f} lpc {:.3f}", size * 100, g, l));
    better = better && l > g;
    margins += fmt::format(" {:+.3f}", l - g);
  }

  double worst_snr = 1e9;
  const std::vector<std::vector<std::pair<double, double>>> signals{
      {{440.0, 0.5}},
      {{220.0, 0.4}, {660.0, 0.2}, {1250.0, 0.1}},
      {{300.0, 0.3}, {810.0, 0.25}, {2900.0, 0.05}, {4100.0, 0.05}},
  };
  for (const auto& partials : signals) {
    Waveform w;
    w.samples.resize(kSampleRate);
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (const auto& [f, a] : partials) {
        w.samples[i] += a * std::sin(2.0 * std::numbers::pi * f * double(i) / kSampleRate + f);
      }
    }
    const SampleInterval gap{8000, 8000 + kSampleRate / 10};
    Waveform holed = w;
    std::fill(holed.samples.begin() + static_cast<long>(gap.start),
              holed.samples.begin() + static_cast<long>(gap.end), 0.0);
    const Waveform fixed = extrapolate_gap(holed, gap, LpcConfig{});
    double e = 0.0, d = 0.0;
    for (std::size_t i = gap.start; i < gap.end; ++i) {
      e += w.samples[i] * w.samples[i];
      d += (w.samples[i] - fixed.samples[i]) * (w.samples[i] - fixed.samples[i]);
    }
    worst_snr = std::min(worst_snr, 10.0 * std::log10(e / d));
  }
  progress(fmt::format("100 ms gap: worst SNR {:.1f} dB", worst_snr));
  const bool pass = better && worst_snr >= 20.0;
  return {pass, fmt::format("lpc-gaps STOI margins{}; 100 ms gap SNR {:.1f} dB", margins, worst_snr)};
}

Tensor random_tensor(Shape s, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(s);
  for (double& v : t.data) v = dist(rng);
  return t;
}

// Partial convolution against plain convolution and a brute-force mask oracle.
Outcome criterion4(const Options&) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick(0, 3);
  const int kernels[] = {1, 3, 5, 7};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = kernels[pick(rng)];
    const int stride = 1 + trial % 2;
    const Tensor x = random_tensor({1 + trial % 3, 1 + pick(rng), 4 + 3 * pick(rng), 4 + 2 * pick(rng)}, rng);
    const Tensor w = random_tensor({1 + pick(rng), x.shape.c, k, k}, rng);
    const Tensor b = random_tensor({1, w.shape.n, 1, 1}, rng);
    const Tensor ones(Shape{x.shape.n, 1, x.shape.h, x.shape.w}, 1.0);
    const auto pc = nn::partial_conv2d(x, ones, w, b, stride);
    const Tensor ref = nn::conv2d(x, w, b, stride);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(pc.y.data[i] - ref.data[i]));
  }

  int mismatches = 0, cases = 0;
  for (int k : {1, 3, 5}) {
    for (int stride : {1, 2}) {
      const Tensor x = random_tensor({1, 1, 8, 8}, rng);
      const Tensor w = random_tensor({1, 1, k, k}, rng);
      const Tensor b(Shape{1, 1, 1, 1});
      const int pad = nn::same_pad_before(8, k, stride);
      for (int hole = 0; hole < 64; ++hole) {
        ++cases;
        Tensor m(Shape{1, 1, 8, 8}, 1.0);
        m.data[static_cast<std::size_t>(hole)] = 0.0;
        const auto out = nn::partial_conv2d(x, m, w, b, stride);
        for (int oy = 0; oy < out.mask.shape.h; ++oy) {
          for (int ox = 0; ox < out.mask.shape.w; ++ox) {
            int valid = 0;
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                const bool inside = iy >= 0 && iy < 8 && ix >= 0 && ix < 8;
                valid += !inside || iy * 8 + ix != hole;
              }
            }
            const double want_mask = valid > 0 ? 1.0 : 0.0;
            const double want_scale = valid > 0 ? double(k * k) / valid : 0.0;
            if (out.mask.at(0, 0, oy, ox) != want_mask ||
                std::abs(out.scale.at(0, 0, oy, ox) - want_scale) > 1e-12) {
              ++mismatches;
            }
          }
        }
      }
    }
  }
  const bool pass = worst <= 1e-5 && mismatches == 0;
  return {pass, fmt::format("all-valid max deviation {:.2e} over 100 layers; mask oracle {} mismatches "
                            "over {} single-hole cases",
                            worst, mismatches, cases)};
}

// Largest relative central-difference error over sampled entries.
double gradient_error(Tensor& t, const Tensor& analytic, const std::function<double()>& loss,
                      std::mt19937_64& rng, int samples) {
  std::uniform_int_distribution<std::size_t> pick(0, t.size() - 1);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const std::size_t i = samples >= static_cast<int>(t.size()) ? static_cast<std::size_t>(s) % t.size() : pick(rng);
    const double saved = t.data[i], h = 1e-5;
    t.data[i] = saved + h;
    const double up = loss();
    t.data[i] = saved - h;
    const double down = loss();
    t.data[i] = saved;
    const double num = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(num - analytic.data[i]) /
                                std::max({std::abs(num), std::abs(analytic.data[i]), 1e-4}));
  }
  return worst;
}

// Deep-feature and pixel losses.
Outcome criterion5(const Options&) {
  std::mt19937_64 rng(12);
  SpeechVGGConfig full;
  full.width_scale = 0.125;
  full.hidden = 16;
  const SpeechVGG vgg(full, 1);
  const Tensor y = random_tensor({2, 1, kNumBins, kNumFrames}, rng);
  const double self = deep_feature_loss(y, y, vgg);

  double pixel_dev = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = random_tensor({2, 1, 16, 12}, rng), b = random_tensor({2, 1, 16, 12}, rng);
    long double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(static_cast<long double>(a.data[i]) - b.data[i]);
    const double oracle = static_cast<double>(s / a.size());
    pixel_dev = std::max(pixel_dev, std::abs(pixel_loss(a, b) - oracle) / oracle);
  }

  SpeechVGGConfig toy;
  toy.block_convs = {1, 2};
  toy.block_channels = {3, 4};
  toy.hidden = 6;
  toy.classes = 3;
  toy.input_size = 8;
  const SpeechVGG small(toy, 2);
  const Tensor target = random_tensor({2, 1, 8, 8}, rng);
  Tensor estimate = random_tensor({2, 1, 8, 8}, rng);
  std::unique_ptr<FeatureExtractor::Tape> tape;
  const auto lg = deep_feature_loss_grad(small.taps(target, &tape), estimate, small);
  const double grad_err = gradient_error(estimate, lg.grad,
                                         [&] { return deep_feature_loss(target, estimate, small); }, rng, 128);

  const bool pass = self == 0.0 && pixel_dev <= 1e-6 && grad_err <= 1e-3;
  return {pass, fmt::format("L(Y,Y) = {}; pixel loss relative deviation {:.1e}; gradient relative error {:.1e}",
                            self, pixel_dev, grad_err)};
}

// STFT round trip and STOI.
Outcome criterion6(const Options& o) {
  const EvalDataset data = dev_segments(o, 20);
  if (data.size() < 20) return {false, fmt::format("only {} dev segments", data.size())};
  double worst_snr = 1e9, worst_self = 0.0;
  for (const auto& seg : data.segments) {
    const Waveform back = istft(stft(seg));
    double e = 0.0, d = 0.0;
    for (std::size_t i = kWindowLength; i + kWindowLength < seg.size(); ++i) {
      e += seg.samples[i] * seg.samples[i];
      d += (seg.samples[i] - back.samples[i]) * (seg.samples[i] - back.samples[i]);
    }
    worst_snr = std::min(worst_snr, d == 0.0 ? 1e9 : 10.0 * std::log10(e / d));
    worst_self = std::max(worst_self, std::abs(stoi(seg, seg) - 1.0));
  }

  std::ifstream in(o.fixtures / "stoi" / "expected.txt");
  double worst_ref = 0.0;
  int pairs = 0;
  for (std::string name; in >> name;) {
    double expected = 0.0;
    in >> expected;
    const Waveform ref = read_wav(o.fixtures / "stoi" / (name + "_ref.wav"));
    const Waveform deg = read_wav(o.fixtures / "stoi" / (name + "_deg.wav"));
    worst_ref = std::max(worst_ref, std::abs(stoi(ref, deg) - expected));
    ++pairs;
  }
  const bool pass = worst_snr >= 50.0 && worst_self <= 1e-3 && pairs == 10 && worst_ref <= 0.01;
  return {pass, fmt::format("round trip worst {:.1f} dB; |STOI(x,x)-1| <= {:.1e}; reference deviation "
                            "{:.4f} over {} pairs",
                            worst_snr, worst_self, worst_ref, pairs)};
}

TrainConfig toy_config(TrainPhase phase) {
  TrainConfig c = TrainConfig::defaults(phase);
  c.seed = 1;
  if (phase == TrainPhase::PretrainVGG) {
    c.epochs = 3;
    c.vgg_width = 0.125;
    c.vgg_hidden = 256;
    c.max_samples = 3000;
  } else {
    c.epochs = 5;
    c.filter_scale = 0.25;
    c.max_samples = 2000;
  }
  return c;
}

void log_epochs(TrainHooks& hooks, const std::string& tag) {
  hooks.on_epoch = [tag](const EpochSummary& e) {
    progress(fmt::format("{} epoch {} loss {:.4f}", tag, e.epoch, e.mean_loss));
  };
}

// Toy networks against the inputs they restore.
Outcome criterion7(const Options& o) {
  const ChannelStats stats = load_stats(o.data / "stats.txt");
  const auto train_records = read_manifest(o.data / "manifest-train.jsonl");

  TrainConfig vcfg = toy_config(TrainPhase::PretrainVGG);
  vcfg.workers = o.workers;
  const Vocabulary vocab = Vocabulary::load(o.data / "vocab.txt");
  const auto words = load_word_samples(train_records, read_alignments(o.data / "alignments-train.jsonl"),
                                       vocab, stats, vcfg.seed, vcfg.max_samples, vcfg.workers);
  progress(fmt::format("extractor: {} words, {} classes", words.size(), vocab.size()));
  ExtractorTrainer vtrainer(vcfg, words, vocab);
  TrainHooks vhooks;
  log_epochs(vhooks, "extractor");
  vtrainer.run(vhooks);
  const SpeechVGG& extractor = vtrainer.model();

  TrainConfig icfg = toy_config(TrainPhase::TrainInpainter);
  icfg.workers = o.workers;
  const SegmentSet segs = load_segments(train_records, stats, icfg.max_samples, icfg.workers);
  progress(fmt::format("inpainters: {} training segments", segs.size()));
  InpainterTrainer informed(icfg, segs, &extractor, &stats);
  TrainHooks ihooks;
  log_epochs(ihooks, "informed");
  informed.run(ihooks);

  TrainConfig bcfg = icfg;
  bcfg.mode = UNetMode::Blind;
  bcfg.fill = FillMode::AdditiveNoise;
  bcfg.noise.additive_snr_db = -15.0;
  InpainterTrainer blind(bcfg, segs, &extractor, &stats);
  TrainHooks bhooks;
  log_epochs(bhooks, "blind");
  blind.run(bhooks);

  if (!o.work.empty()) {
    fs::create_directories(o.work);
    extractor.save(o.work / "toy-extractor.ckpt");
    informed.model().save(o.work / "toy-informed.ckpt");
    blind.model().save(o.work / "toy-blind.ckpt");
  }

  const EvalDataset held = dev_segments(o, 50);
  ModelBank bank;
  bank.stats = &stats;
  bank.models["informed:toy"] = &informed.model();
  bank.models["blind:additive"] = &blind.model();
  EvalConfig cfg = eval_config(o);
  cfg.noise.additive_snr_db = -15.0;
  const std::vector<Scenario> scen{Scenario::parse("gaps"), Scenario::parse("noise:additive"),
                                   Scenario::parse("informed:toy"), Scenario::parse("blind:additive")};
  const auto recs = run_grid(make_grid({MaskKind::TimeFreq}, {0.2}, scen), held, bank, cfg);
  auto at = [&](const std::string& s) { return find_record(recs, MaskKind::TimeFreq, 0.2, s).stoi.mean; };
  const double gain_informed = at("informed:toy") - at("gaps");
  const double gain_blind = at("blind:additive") - at("noise:additive");
  progress(fmt::format("gaps {:.3f} informed {:.3f}; noisy input {:.3f} blind {:.3f}", at("gaps"),
                       at("informed:toy"), at("noise:additive"), at("blind:additive")));
  const bool pass = gain_informed >= 0.02 && gain_blind >= 0.01;
  return {pass, fmt::format("informed gain {:+.3f} STOI (need +0.02); blind gain {:+.3f} (need +0.01) on {} "
                            "held-out segments",
                            gain_informed, gain_blind, held.size())};
}

// Re-runs reproduce evaluation output and training losses.
Outcome criterion8(const Options& o) {
  const EvalDataset data = dev_segments(o, 20);
  const auto pesq = pesq_backend(o);
  EvalConfig cfg = eval_config(o);
  cfg.pesq = pesq.get();
  const auto grid = make_grid(kKinds, {0.2}, {Scenario::parse("gaps"), Scenario::parse("noise"),
                                               Scenario::parse("lpc")});
  std::string csv[2];
  for (auto& text : csv) {
    std::ostringstream out;
    write_csv(out, run_grid(grid, data, {}, cfg));
    text = out.str();
  }
  const bool same_csv = csv[0] == csv[1];

  const ChannelStats stats = load_stats(o.data / "stats.txt");
  TrainConfig t = toy_config(TrainPhase::TrainInpainter);
  t.loss = LossKind::Pixel;
  t.batch_size = 4;
  t.epochs = 2;
  t.max_samples = 200;
  t.workers = o.workers;
  const SegmentSet segs = load_segments(read_manifest(o.data / "manifest-train.jsonl"), stats, t.max_samples,
                                        t.workers);
  std::vector<double> losses[2];
  for (auto& l : losses) {
    InpainterTrainer trainer(t, segs, nullptr, &stats);
    TrainHooks hooks;
    hooks.stop_after = 100;
    hooks.on_step = [&](const TrainLogEntry& e) { l.push_back(e.loss); };
    trainer.run(hooks);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < std::min(losses[0].size(), losses[1].size()); ++i) {
    worst = std::max(worst, std::abs(losses[0][i] - losses[1][i]));
  }
  const bool same_losses = losses[0].size() == 100 && losses[1].size() == 100 && worst <= 1e-6;
  return {same_csv && same_losses,
          fmt::format("CSV re-run {} ({} rows{}); {} training losses, max difference {:.1e}",
                      same_csv ? "identical" : "differs", grid.size(), pesq ? ", with PESQ" : "",
                      losses[0].size(), worst)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Options o;
  std::vector<int> which;
  app.add_option("--criterion", which, "Criteria to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--data", o.data, "Prepared data directory (manifests, stats, vocabulary)")->required();
  app.add_option("--work", o.work, "Where trained toy models are kept");
  app.add_option("--fixtures", o.fixtures, "Test fixture directory");
  app.add_option("--pesq-command", o.pesq_command, "PESQ backend command line");
  app.add_option("--workers", o.workers)->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::function<Outcome(const Options&)> checks[] = {criterion1, criterion2, criterion3, criterion4,
                                                           criterion5, criterion6, criterion7, criterion8};
  bool all = true;
  for (int c : which) {
    const auto start = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = checks[c - 1](o);
    } catch (const std::exception& e) {
      r = {false, std::string("error: ") + e.what()};
    }
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << fmt::format("criterion {}: {} {} [{:.0f} s]", c, r.pass ? "PASS" : "FAIL", r.detail, secs)
              << std::endl;
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
