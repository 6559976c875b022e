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

// sinpaint: data preparation, training, evaluation and single-file
// inpainting from the command line.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sinpaint/corpus.hpp"
#include "sinpaint/dsp.hpp"
#include "sinpaint/error.hpp"
#include "sinpaint/evaluation.hpp"
#include "sinpaint/feature_loss.hpp"
#include "sinpaint/mask.hpp"
#include "sinpaint/metrics.hpp"
#include "sinpaint/parallel.hpp"
#include "sinpaint/rng.hpp"
#include "sinpaint/synth.hpp"
#include "sinpaint/training.hpp"
#include "sinpaint/unet.hpp"
#include "sinpaint/wav.hpp"

namespace fs = std::filesystem;
using namespace sinpaint;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kModel = 3 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string device_hint = "auto";
  fs::path self;
};

void note(const std::string& msg) { std::cerr << "sinpaint: " << msg << "\n"; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::uint64_t seed_or(const Globals& g, std::uint64_t fallback) { return g.seed.value_or(fallback); }
int workers_or(const Globals& g, int fallback) { return g.workers.value_or(fallback); }

// ---------------------------------------------------------------------------
// PESQ backend selection.

struct PesqChoice {
  std::unique_ptr<ExternalPesqBackend> backend;
  std::string description = "unavailable";
};

PesqChoice choose_pesq(const std::string& option, int timeout_ms, const Globals& g) {
  PesqChoice out;
  if (option == "off") return out;
  std::vector<std::string> command;
  if (option != "auto") {
    command = split_words(option);
  } else if (const char* env = std::getenv("SINPAINT_PESQ_COMMAND"); env != nullptr && *env) {
    command = split_words(env);
  } else {
    const fs::path script = g.self.parent_path() / "pesq_backend.py";
    if (fs::exists(script)) command = {"python3", script.string()};
  }
  if (command.empty()) return out;

  auto backend = std::make_unique<ExternalPesqBackend>(command, std::chrono::milliseconds(timeout_ms));
  // One probe call; an unusable backend is reported once instead of per segment.
  Waveform probe;
  probe.samples.resize(kSegmentSamples);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    probe.samples[i] = 0.3 * std::sin(0.05 * double(i)) * std::sin(0.0007 * double(i));
  }
  try {
    backend->score(probe, probe);
  } catch (const PesqError& e) {
    if (option != "auto") throw DataError(std::string("PESQ backend unusable: ") + e.what());
    note(std::string("PESQ backend unavailable (") + e.what() + "); PESQ columns will be NA");
    return out;
  }
  out.description = command.front() + (command.size() > 1 ? " " + command[1] : "");
  out.backend = std::move(backend);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_prepare(const Globals& g, const fs::path& root, const fs::path& out_dir, bool synthesize,
                SyntheticCorpusOptions synth) {
  if (synthesize) {
    synth.seed = seed_or(g, synth.seed);
    note("writing synthetic corpus to " + root.string());
    write_synthetic_corpus(root, synth);
  }
  fs::create_directories(out_dir);
  const std::vector<std::pair<std::string, Split>> splits{
      {"train-clean-100", Split::Train}, {"dev-clean", Split::Dev}, {"test-clean", Split::Test}};
  int found = 0;
  for (const auto& [dir, split] : splits) {
    if (!fs::is_directory(root / dir)) {
      note("no " + dir + " under " + root.string() + "; skipped");
      continue;
    }
    ++found;
    const ManifestResult m = build_manifest(root / dir, split);
    for (const auto& w : m.warnings) note(w);
    const fs::path manifest = out_dir / ("manifest-" + to_string(split) + ".jsonl");
    write_manifest(manifest, m.records);
    std::cout << to_string(split) << ": " << m.records.size() << " utterances -> " << manifest.string()
              << "\n";
    const fs::path align = root / (dir + ".alignments.jsonl");
    if (fs::exists(align)) {
      const fs::path dst = out_dir / ("alignments-" + to_string(split) + ".jsonl");
      write_alignments(dst, read_alignments(align));
      std::cout << to_string(split) << ": alignments -> " << dst.string() << "\n";
    }
  }
  if (found == 0) throw DataError("no LibriSpeech split directories under " + root.string());
  return kOk;
}

int cmd_stats(const Globals& g, const fs::path& manifest, const fs::path& out, std::size_t limit) {
  const auto records = read_manifest(manifest);
  if (records.empty()) throw DataError(manifest.string() + " lists no utterances");
  const std::size_t n = limit == 0 ? records.size() : std::min(limit, records.size());
  std::vector<LogMagnitude> mags;
  StatsAccumulator acc;
  std::vector<std::vector<LogMagnitude>> per(n);
  parallel_for(n, workers_or(g, 1), [&](std::size_t i) {
    for (const auto& seg : segment(read_wav(records[i].audio_path))) {
      per[i].push_back(log_magnitude(stft(seg)));
    }
  });
  for (const auto& v : per) {
    for (const auto& m : v) acc.add(m);
  }
  if (acc.count() == 0) throw DataError("no complete segments in " + manifest.string());
  save_stats(out, acc.finish());
  std::cout << "stats over " << acc.count() << " frames -> " << out.string() << "\n";
  return kOk;
}

int cmd_vocab(const fs::path& manifest, const fs::path& out, std::size_t size) {
  const Vocabulary v = build_vocabulary(read_manifest(manifest), size);
  v.save(out);
  std::cout << v.size() << " words -> " << out.string() << "\n";
  if (v.size() < size) note("vocabulary is short: only " + std::to_string(v.size()) + " qualifying words");
  return kOk;
}

TrainConfig training_config(const Globals& g, TrainPhase phase,
                            const std::vector<std::string>& overrides) {
  TrainConfig cfg = g.config.empty() ? TrainConfig::defaults(phase)
                                     : read_train_config(g.config, phase);
  cfg.phase = phase;
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ContractViolation("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  cfg.validate();
  return cfg;
}

// Appends log lines; truncated on a fresh run.
class LogWriter {
 public:
  LogWriter(const fs::path& path, bool append)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  void write(const TrainLogEntry& e) { out_ << to_json_line(e) << "\n" << std::flush; }

 private:
  std::ofstream out_;
};

struct PretrainArgs {
  fs::path manifest, alignments, vocab, stats, out_dir;
  fs::path test_manifest, test_alignments;
  std::size_t vocab_size = 0;
  bool resume = false;
  std::vector<std::string> overrides;
};

int cmd_pretrain(const Globals& g, const PretrainArgs& a) {
  const TrainConfig cfg = training_config(g, TrainPhase::PretrainVGG, a.overrides);
  Vocabulary vocab = Vocabulary::load(a.vocab);
  if (a.vocab_size != 0 && a.vocab_size < vocab.size()) {
    vocab = Vocabulary(std::vector<std::string>(vocab.words().begin(),
                                                vocab.words().begin() + static_cast<long>(a.vocab_size)));
  }
  const ChannelStats stats = load_stats(a.stats);
  const auto train = load_word_samples(read_manifest(a.manifest), read_alignments(a.alignments), vocab,
                                       stats, cfg.seed, cfg.max_samples, cfg.workers);
  std::vector<WordSample> held;
  if (!a.test_manifest.empty()) {
    if (a.test_alignments.empty()) throw ContractViolation("--test-manifest needs --test-alignments");
    held = load_word_samples(read_manifest(a.test_manifest), read_alignments(a.test_alignments), vocab,
                             stats, derive_seed(cfg.seed, 7), 0, cfg.workers);
  }
  std::cout << train.size() << " training words, " << held.size() << " held-out words, "
            << vocab.size() << " classes\n";

  fs::create_directories(a.out_dir);
  write_run_config(a.out_dir / "run.cfg", cfg);
  ExtractorTrainer trainer(cfg, train, vocab, held.empty() ? nullptr : &held);
  const fs::path state = a.out_dir / "run-state.ckpt";
  if (a.resume) {
    if (!fs::exists(state)) throw ModelError("nothing to resume: " + state.string() + " is missing");
    trainer.load_state(state);
    std::cout << "resumed at step " << trainer.step_count() << "\n";
  }
  LogWriter log(a.out_dir / "train_log.jsonl", a.resume);
  TrainHooks hooks;
  hooks.checkpoint_dir = a.out_dir;
  hooks.on_step = [&](const TrainLogEntry& e) { log.write(e); };
  hooks.on_epoch = [&](const EpochSummary& e) {
    std::cout << "epoch " << e.epoch << " loss " << e.mean_loss;
    if (e.accuracy) std::cout << " held-out accuracy " << *e.accuracy;
    std::cout << std::endl;
  };
  trainer.run(hooks);
  std::cout << "train accuracy " << trainer.accuracy(train) << "\nextractor -> "
            << (a.out_dir / "extractor.ckpt").string() << "\n";
  return kOk;
}

struct TrainArgs {
  fs::path manifest, stats, extractor, out_dir;
  bool resume = false;
  std::vector<std::string> overrides;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const TrainConfig cfg = training_config(g, TrainPhase::TrainInpainter, a.overrides);
  std::optional<SpeechVGG> extractor;
  if (cfg.loss == LossKind::DeepFeature) {
    if (a.extractor.empty()) throw ModelError("deep-feature loss needs --extractor");
    if (!fs::exists(a.extractor)) throw ModelError("extractor not found: " + a.extractor.string());
    extractor.emplace(SpeechVGG::load(a.extractor));
  }
  const ChannelStats stats = load_stats(a.stats);
  const SegmentSet data = load_segments(read_manifest(a.manifest), stats, cfg.max_samples, cfg.workers);
  std::cout << data.size() << " training segments\n";

  fs::create_directories(a.out_dir);
  write_run_config(a.out_dir / "run.cfg", cfg);
  InpainterTrainer trainer(cfg, data, extractor ? &*extractor : nullptr, &stats);
  const fs::path state = a.out_dir / "run-state.ckpt";
  if (a.resume) {
    if (!fs::exists(state)) throw ModelError("nothing to resume: " + state.string() + " is missing");
    trainer.load_state(state);
    std::cout << "resumed at step " << trainer.step_count() << "\n";
  }
  LogWriter log(a.out_dir / "train_log.jsonl", a.resume);
  TrainHooks hooks;
  hooks.checkpoint_dir = a.out_dir;
  hooks.on_step = [&](const TrainLogEntry& e) { log.write(e); };
  hooks.on_epoch = [&](const EpochSummary& e) {
    std::cout << "epoch " << e.epoch << " loss " << e.mean_loss << std::endl;
  };
  trainer.run(hooks);
  std::cout << "model -> " << (a.out_dir / "model.ckpt").string() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string split = "dev";
  fs::path data_dir = "data";
  fs::path manifest;
  fs::path stats;
  std::string sizes = "0.1,0.2,0.3,0.4";
  std::string intrusions = "time,timefreq,random";
  std::string scenarios = "gaps,noise";
  std::size_t max_segments = 0;
  fs::path out_csv = "results.csv";
  std::vector<std::string> models;
  std::string pesq = "auto";
  int pesq_timeout_ms = 30000;
  int lws_iterations = 100;
  bool full_phase = false;
  bool no_composite = false;
};

int cmd_evaluate(const Globals& g, const EvalArgs& a) {
  std::vector<MaskKind> kinds;
  for (const auto& k : split_list(a.intrusions)) kinds.push_back(parse_mask_kind(k));
  std::vector<double> sizes;
  for (const auto& s : split_list(a.sizes)) {
    double v = 0;
    try {
      v = std::stod(s);
    } catch (const std::exception&) {
      throw ContractViolation("--sizes: '" + s + "' is not a number");
    }
    if (v > 1.0) v /= 100.0;
    if (v < 0.0 || v > kMaxCoverage) throw ContractViolation("--sizes: " + s + " outside [0, 0.6]");
    sizes.push_back(v);
  }
  std::vector<Scenario> scenarios;
  for (const auto& s : split_list(a.scenarios)) scenarios.push_back(Scenario::parse(s));
  if (kinds.empty() || sizes.empty() || scenarios.empty()) {
    throw ContractViolation("empty --intrusions, --sizes or --scenarios");
  }

  std::optional<ChannelStats> stats;
  if (!a.stats.empty()) stats = load_stats(a.stats);
  std::map<std::string, std::unique_ptr<UNet>> owned;
  ModelBank bank;
  bank.stats = stats ? &*stats : nullptr;
  for (const auto& spec : a.models) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ContractViolation("--model expects SCENARIO=PATH");
    const Scenario s = Scenario::parse(spec.substr(0, eq));
    if (!s.uses_model()) throw ContractViolation("--model: " + s.name() + " takes no model");
    const fs::path path = spec.substr(eq + 1);
    if (!fs::exists(path)) throw ModelError("model not found: " + path.string());
    owned[s.name()] = std::make_unique<UNet>(UNet::load(path));
    bank.models[s.name()] = owned[s.name()].get();
  }
  for (const auto& s : scenarios) {
    if (s.uses_model() && bank.find(s) == nullptr) {
      throw ModelError("scenario " + s.name() + " needs --model " + s.name() + "=PATH");
    }
    if ((s.uses_model() || (s.kind == ScenarioKind::Noise && s.fill() != FillMode::SpeechShaped)) &&
        !stats) {
      throw DataError("scenario " + s.name() + " needs --stats");
    }
  }

  const Split split = parse_split(a.split);
  const fs::path manifest =
      a.manifest.empty() ? a.data_dir / ("manifest-" + to_string(split) + ".jsonl") : a.manifest;
  const EvalDataset data = load_eval_segments(read_manifest(manifest), a.max_segments);
  if (data.size() == 0) throw DataError("no segments in " + manifest.string());

  const PesqChoice pesq = choose_pesq(a.pesq, a.pesq_timeout_ms, g);
  EvalConfig cfg;
  cfg.seed = seed_or(g, 0);
  cfg.workers = workers_or(g, 1);
  cfg.pesq = pesq.backend.get();
  cfg.phase.iterations = a.lws_iterations;
  cfg.keep_valid_phase = !a.full_phase;
  cfg.composite = !a.no_composite;
  note(std::to_string(data.size()) + " segments, PESQ " + pesq.description);

  std::vector<std::string> errors;
  const auto records = run_grid(make_grid(kinds, sizes, scenarios), data, bank, cfg, &errors);
  write_csv(a.out_csv, records);
  std::cout << render_report(records).table;
  std::cout << "results -> " << a.out_csv.string() << "\n";
  for (const auto& e : errors) note("condition failed: " + e);
  return errors.empty() ? kOk : kData;
}

struct InpaintArgs {
  fs::path input, output, model, stats, mask_file, reference, report;
  std::string mask_kind = "time";
  double coverage = 0.0;
  std::string blind_fill = "additive";
  std::string pesq = "auto";
  int lws_iterations = 100;
};

int cmd_inpaint(const Globals& g, const InpaintArgs& a) {
  InpaintRequest req;
  req.input = a.input;
  req.output = a.output;
  if (!a.model.empty()) req.model = a.model;
  if (!a.mask_file.empty()) req.mask_file = a.mask_file;
  if (!a.reference.empty()) req.reference = a.reference;
  if (!a.report.empty()) req.report = a.report;
  req.mask = {parse_mask_kind(a.mask_kind), a.coverage, seed_or(g, 0)};
  req.blind_fill = parse_fill_mode(a.blind_fill);
  if (req.model && !fs::exists(*req.model)) throw ModelError("model not found: " + req.model->string());

  std::optional<ChannelStats> stats;
  if (!a.stats.empty()) stats = load_stats(a.stats);
  const PesqChoice pesq =
      req.reference ? choose_pesq(a.pesq, 30000, g) : PesqChoice{};
  EvalConfig cfg;
  cfg.seed = seed_or(g, 0);
  cfg.workers = workers_or(g, 1);
  cfg.pesq = pesq.backend.get();
  cfg.phase.iterations = a.lws_iterations;
  cfg.keep_valid_phase = true;
  const InpaintReport rep = inpaint_file(req, stats ? &*stats : nullptr, cfg);
  std::cout << rep.segments << " segments -> " << a.output.string() << "\n";
  for (const auto& s : rep.scores) {
    if (!s.stoi) continue;
    std::cout << "segment " << s.index << " masked " << s.masked_fraction << " stoi " << *s.stoi;
    if (s.pesq) std::cout << " pesq " << *s.pesq;
    std::cout << "\n";
  }
  return kOk;
}

int cmd_report(const std::vector<std::string>& csvs, const fs::path& out_dir) {
  std::vector<EvalRecord> records;
  for (const auto& c : csvs) {
    auto r = read_csv(c);
    records.insert(records.end(), r.begin(), r.end());
  }
  if (records.empty()) throw DataError("no records in the given CSV files");
  const ReportFiles files = render_report(records, out_dir);
  std::cout << files.table;
  if (!out_dir.empty()) {
    std::ofstream(out_dir / "table.txt") << files.table;
    for (const auto& p : files.plots) std::cout << "plot -> " << p.string() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech inpainting toolkit: data preparation, training, evaluation, restoration"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  g.self = fs::absolute(argv[0]);
  app.add_option("--config", g.config, "Run configuration file (key = value)");
  app.add_option("--seed", g.seed, "Seed for every random draw");
  app.add_option("--workers", g.workers, "Worker threads for loading and scoring")->check(CLI::PositiveNumber);
  app.add_option("--device-hint", g.device_hint, "Compute device preference (only cpu is built in)");

  // prepare-data
  fs::path prep_root = "LibriSpeech", prep_out = "data";
  bool prep_synth = false;
  SyntheticCorpusOptions synth;
  auto* prep = app.add_subcommand("prepare-data", "Build manifests from a LibriSpeech-layout tree");
  prep->add_option("--root", prep_root, "Corpus root holding train-clean-100, dev-clean, test-clean");
  prep->add_option("--out", prep_out, "Output directory for manifests and alignments");
  prep->add_flag("--synthesize", prep_synth, "Write a synthetic speech corpus under --root first");
  prep->add_option("--synth-train-speakers", synth.train_speakers);
  prep->add_option("--synth-dev-speakers", synth.dev_speakers);
  prep->add_option("--synth-test-speakers", synth.test_speakers);
  prep->add_option("--synth-train-utterances", synth.train_utterances_per_chapter,
                   "Utterances per training chapter");
  prep->add_option("--synth-eval-utterances", synth.eval_utterances_per_chapter,
                   "Utterances per dev/test chapter");

  // compute-stats
  fs::path stats_manifest, stats_out = "data/stats.txt";
  std::size_t stats_limit = 0;
  auto* cstats = app.add_subcommand("compute-stats", "Per-channel log-magnitude mean and std");
  cstats->add_option("--manifest", stats_manifest, "Training manifest")->required();
  cstats->add_option("--out", stats_out, "Stats file");
  cstats->add_option("--max-utterances", stats_limit);

  // build-vocab
  fs::path vocab_manifest, vocab_out = "data/vocab.txt";
  std::size_t vocab_size = Vocabulary::kTargetSize;
  auto* bvocab = app.add_subcommand("build-vocab", "Most frequent words of the training transcripts");
  bvocab->add_option("--manifest", vocab_manifest, "Training manifest")->required();
  bvocab->add_option("--out", vocab_out, "Vocabulary file");
  bvocab->add_option("--size", vocab_size, "Number of words");

  // pretrain-vgg
  PretrainArgs pa;
  pa.out_dir = "runs/vgg";
  auto* pre = app.add_subcommand("pretrain-vgg", "Train the word classifier used by the feature loss");
  pre->add_option("--manifest", pa.manifest, "Training manifest")->required();
  pre->add_option("--alignments", pa.alignments, "Word alignments (JSON lines)")->required();
  pre->add_option("--vocab", pa.vocab, "Vocabulary file")->required();
  pre->add_option("--stats", pa.stats, "Stats file")->required();
  pre->add_option("--test-manifest", pa.test_manifest, "Held-out manifest for accuracy");
  pre->add_option("--test-alignments", pa.test_alignments);
  pre->add_option("--vocab-size", pa.vocab_size, "Keep only the first N vocabulary words");
  pre->add_option("--out-dir", pa.out_dir);
  pre->add_flag("--resume", pa.resume, "Continue from <out-dir>/run-state.ckpt");
  pre->add_option("--set", pa.overrides, "Config override key=value (repeatable)");

  // train
  TrainArgs ta;
  ta.out_dir = "runs/unet";
  auto* tr = app.add_subcommand("train", "Train the inpainting network");
  tr->add_option("--manifest", ta.manifest, "Training manifest")->required();
  tr->add_option("--stats", ta.stats, "Stats file")->required();
  tr->add_option("--extractor", ta.extractor, "Pretrained extractor (deep-feature loss)");
  tr->add_option("--out-dir", ta.out_dir);
  tr->add_flag("--resume", ta.resume, "Continue from <out-dir>/run-state.ckpt");
  tr->add_option("--set", ta.overrides, "Config override key=value (repeatable)");

  // evaluate
  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score a grid of corruption/restoration conditions");
  ev->add_option("--split", ea.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  ev->add_option("--data-dir", ea.data_dir, "Directory holding manifest-<split>.jsonl");
  ev->add_option("--manifest", ea.manifest, "Explicit manifest (overrides --split)");
  ev->add_option("--stats", ea.stats, "Stats file (needed by models and non speech-shaped noise)");
  ev->add_option("--sizes", ea.sizes, "Comma-separated mask sizes");
  ev->add_option("--intrusions", ea.intrusions, "Comma-separated: time,timefreq,random");
  ev->add_option("--scenarios", ea.scenarios,
                 "Comma-separated: gaps, noise[:fill], lpc, informed:<label>, blind:<fill>");
  ev->add_option("--max-segments", ea.max_segments, "0 = all");
  ev->add_option("--out-csv", ea.out_csv);
  ev->add_option("--model", ea.models, "SCENARIO=PATH (repeatable)");
  ev->add_option("--pesq", ea.pesq, "auto, off, or a backend command line");
  ev->add_option("--pesq-timeout-ms", ea.pesq_timeout_ms);
  ev->add_option("--lws-iterations", ea.lws_iterations);
  ev->add_flag("--full-phase", ea.full_phase, "Estimate the phase of every bin, not only masked ones");
  ev->add_flag("--no-composite", ea.no_composite, "Use raw network output on valid bins too");

  // inpaint
  InpaintArgs ia;
  auto* inp = app.add_subcommand("inpaint", "Restore one WAV file");
  inp->add_option("--input", ia.input)->required();
  inp->add_option("--output", ia.output)->required();
  inp->add_option("--model", ia.model, "Network checkpoint (LPC when omitted)");
  inp->add_option("--stats", ia.stats);
  inp->add_option("--mask-file", ia.mask_file, "Mask applied to every segment");
  inp->add_option("--mask-kind", ia.mask_kind);
  inp->add_option("--coverage", ia.coverage)->check(CLI::Range(0.0, kMaxCoverage));
  inp->add_option("--reference", ia.reference, "Clean signal for scoring");
  inp->add_option("--report", ia.report, "JSON report path");
  inp->add_option("--blind-fill", ia.blind_fill);
  inp->add_option("--pesq", ia.pesq);
  inp->add_option("--lws-iterations", ia.lws_iterations);

  // report
  std::vector<std::string> report_csvs;
  fs::path report_dir;
  auto* rep = app.add_subcommand("report", "Tables and plots from evaluation CSVs");
  rep->add_option("csv", report_csvs, "Result CSV files")->required();
  rep->add_option("--out-dir", report_dir, "Write table.txt and SVG plots here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (g.device_hint != "auto" && g.device_hint != "cpu") {
    note("device hint '" + g.device_hint + "' ignored; running on the CPU");
  }
  const bool config_used = tr->parsed() || pre->parsed();
  if (!g.config.empty() && !config_used) note("--config only affects pretrain-vgg and train");

  try {
    if (prep->parsed()) return cmd_prepare(g, prep_root, prep_out, prep_synth, synth);
    if (cstats->parsed()) return cmd_stats(g, stats_manifest, stats_out, stats_limit);
    if (bvocab->parsed()) return cmd_vocab(vocab_manifest, vocab_out, vocab_size);
    if (pre->parsed()) return cmd_pretrain(g, pa);
    if (tr->parsed()) return cmd_train(g, ta);
    if (ev->parsed()) return cmd_evaluate(g, ea);
    if (inp->parsed()) return cmd_inpaint(g, ia);
    if (rep->parsed()) return cmd_report(report_csvs, report_dir);
  } catch (const ContractViolation& e) {
    note(e.what());
    return kUsage;
  } catch (const UnsupportedError& e) {
    note(e.what());
    return kUsage;
  } catch (const ModelError& e) {
    note(e.what());
    return kModel;
  } catch (const DataError& e) {
    note(e.what());
    return kData;
  } catch (const std::exception& e) {
    note(e.what());
    return kData;
  }
  return kUsage;
}
