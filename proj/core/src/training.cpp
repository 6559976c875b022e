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

#include "sinpaint/training.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sinpaint/error.hpp"
#include "sinpaint/parallel.hpp"
#include "sinpaint/rng.hpp"
#include "sinpaint/wav.hpp"

namespace sinpaint {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Exact text form of a double.
std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ContractViolation("config: " + key + " expects a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ContractViolation("config: " + key + " expects an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long i = std::stoull(v, &used);
    if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ContractViolation("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ContractViolation("config: " + key + " expects true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TrainPhase parse_phase(const std::string& s) {
  if (s == "pretrain-vgg") return TrainPhase::PretrainVGG;
  if (s == "train") return TrainPhase::TrainInpainter;
  throw ContractViolation("config: unknown phase '" + s + "'");
}

constexpr std::uint64_t kMaskStream = hash_string("mask");
constexpr std::uint64_t kOrderStream = hash_string("order");
constexpr std::uint64_t kInitStream = hash_string("init");
constexpr std::uint64_t kAugmentStream = hash_string("augment");

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t stream, int epoch, std::size_t pos) {
  return derive_seed(seed, stream, (static_cast<std::uint64_t>(epoch) << 32) ^ pos);
}

nn::AdamConfig adam_config(const TrainConfig& cfg) {
  nn::AdamConfig a;
  a.lr = cfg.lr;
  a.beta1 = cfg.beta1;
  a.beta2 = cfg.beta2;
  return a;
}

std::string encode_history(const std::vector<EpochSummary>& h) {
  std::string out;
  for (const auto& e : h) {
    out += std::to_string(e.epoch) + " " + hex_double(e.mean_loss) + " " +
           (e.accuracy ? hex_double(*e.accuracy) : std::string("-")) + "\n";
  }
  return out;
}

std::vector<EpochSummary> decode_history(const std::string& text) {
  std::vector<EpochSummary> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    EpochSummary e;
    std::string loss, acc;
    ls >> e.epoch >> loss >> acc;
    e.mean_loss = std::strtod(loss.c_str(), nullptr);
    if (acc != "-") e.accuracy = std::strtod(acc.c_str(), nullptr);
    out.push_back(e);
  }
  return out;
}

// Training progress shared by both trainers' run-state files.
struct Progress {
  int epoch = 0;
  std::size_t cursor = 0;
  std::int64_t step = 0;
  double epoch_loss = 0.0;
  std::size_t epoch_batches = 0;
  std::vector<EpochSummary> history;
};

void put_progress(nn::Checkpoint& c, const Progress& p, std::size_t dataset_size) {
  c.meta["epoch"] = std::to_string(p.epoch);
  c.meta["cursor"] = std::to_string(p.cursor);
  c.meta["step"] = std::to_string(p.step);
  c.meta["epoch_loss"] = hex_double(p.epoch_loss);
  c.meta["epoch_batches"] = std::to_string(p.epoch_batches);
  c.meta["history"] = encode_history(p.history);
  c.meta["dataset_size"] = std::to_string(dataset_size);
}

const std::string& meta_at(const nn::Checkpoint& c, const std::string& key,
                           const std::filesystem::path& path) {
  const auto it = c.meta.find(key);
  if (it == c.meta.end()) throw ModelError(path.string() + ": run state lacks '" + key + "'");
  return it->second;
}

Progress get_progress(const nn::Checkpoint& c, const std::filesystem::path& path,
                      std::size_t dataset_size) {
  Progress p;
  p.epoch = std::stoi(meta_at(c, "epoch", path));
  p.cursor = std::stoull(meta_at(c, "cursor", path));
  p.step = std::stoll(meta_at(c, "step", path));
  p.epoch_loss = std::strtod(meta_at(c, "epoch_loss", path).c_str(), nullptr);
  p.epoch_batches = std::stoull(meta_at(c, "epoch_batches", path));
  p.history = decode_history(meta_at(c, "history", path));
  if (std::stoull(meta_at(c, "dataset_size", path)) != dataset_size) {
    throw ModelError(path.string() + ": run state was saved for a different dataset size");
  }
  return p;
}

// Splits "model.<name>" / "adam.*" tensors of a run-state checkpoint.
void split_state(const nn::Checkpoint& c, std::map<std::string, nn::Tensor>& model,
                 std::map<std::string, nn::Tensor>& adam) {
  for (const auto& [name, t] : c.tensors) {
    if (name.starts_with("model.")) {
      model.emplace(name.substr(6), t);
    } else {
      adam.emplace(name, t);
    }
  }
}

template <class Item, class Fn>
std::vector<Item> load_chunked(const std::vector<UtteranceRecord>& records, std::size_t limit,
                               int workers, Fn per_record) {
  std::vector<Item> out;
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, workers)) * 4;
  for (std::size_t first = 0; first < records.size(); first += chunk) {
    const std::size_t count = std::min(chunk, records.size() - first);
    std::vector<std::vector<Item>> parts(count);
    parallel_for(count, workers, [&](std::size_t k) { parts[k] = per_record(records[first + k]); });
    for (auto& part : parts) {
      for (auto& item : part) out.push_back(std::move(item));
    }
    if (limit != 0 && out.size() >= limit) {
      out.resize(limit);
      break;
    }
  }
  return out;
}

void save_epoch_checkpoint(const std::filesystem::path& dir, const std::string& stem, int epoch,
                           const std::function<void(const std::filesystem::path&)>& save_model) {
  std::filesystem::create_directories(dir);
  char name[64];
  std::snprintf(name, sizeof name, "%s-epoch-%03d.ckpt", stem.c_str(), epoch);
  save_model(dir / name);
  save_model(dir / (stem + ".ckpt"));
}

}  // namespace

std::string to_string(TrainPhase p) {
  return p == TrainPhase::PretrainVGG ? "pretrain-vgg" : "train";
}

std::string to_string(LossKind k) { return k == LossKind::DeepFeature ? "deep-feature" : "pixel"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "deep-feature" || s == "speechvgg" || s == "dfl") return LossKind::DeepFeature;
  if (s == "pixel" || s == "novgg" || s == "l1") return LossKind::Pixel;
  throw ContractViolation("unknown loss '" + s + "' (expected deep-feature or pixel)");
}

TrainConfig TrainConfig::defaults(TrainPhase phase) {
  TrainConfig c;
  c.phase = phase;
  if (phase == TrainPhase::PretrainVGG) {
    c.epochs = 50;
    c.lr = 5e-5;
  } else {
    c.epochs = 30;
    c.lr = 2e-4;
  }
  return c;
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "phase") {
    phase = parse_phase(v);
  } else if (key == "epochs") {
    epochs = static_cast<int>(parse_int(key, v));
  } else if (key == "lr") {
    lr = parse_double(key, v);
  } else if (key == "beta1") {
    beta1 = parse_double(key, v);
  } else if (key == "beta2") {
    beta2 = parse_double(key, v);
  } else if (key == "batch_size") {
    batch_size = static_cast<int>(parse_int(key, v));
  } else if (key == "loss") {
    loss = parse_loss_kind(v);
  } else if (key == "mode") {
    mode = parse_unet_mode(v);
  } else if (key == "fill") {
    try {
      fill = parse_fill_mode(v);
    } catch (const UnsupportedError& e) {
      throw ContractViolation(std::string("config: ") + e.what());
    }
  } else if (key == "white_mean") {
    noise.white_mean = parse_double(key, v);
  } else if (key == "white_std") {
    noise.white_std = parse_double(key, v);
  } else if (key == "additive_snr_db") {
    noise.additive_snr_db = parse_double(key, v);
  } else if (key == "mask_mu") {
    mask_size.mu = parse_double(key, v);
  } else if (key == "mask_sigma") {
    mask_size.sigma = parse_double(key, v);
  } else if (key == "seed") {
    seed = parse_u64(key, v);
  } else if (key == "workers") {
    workers = static_cast<int>(parse_int(key, v));
  } else if (key == "max_samples") {
    max_samples = parse_u64(key, v);
  } else if (key == "filter_scale") {
    filter_scale = parse_double(key, v);
  } else if (key == "vgg_width") {
    vgg_width = parse_double(key, v);
  } else if (key == "vgg_hidden") {
    vgg_hidden = static_cast<int>(parse_int(key, v));
  } else if (key == "augment") {
    augment = parse_bool(key, v);
  } else {
    throw ContractViolation("config: unknown key '" + key + "'");
  }
}

std::map<std::string, std::string> TrainConfig::entries() const {
  return {
      {"phase", to_string(phase)},
      {"epochs", std::to_string(epochs)},
      {"lr", fmt(lr)},
      {"beta1", fmt(beta1)},
      {"beta2", fmt(beta2)},
      {"batch_size", std::to_string(batch_size)},
      {"loss", to_string(loss)},
      {"mode", to_string(mode)},
      {"fill", to_string(fill)},
      {"white_mean", fmt(noise.white_mean)},
      {"white_std", fmt(noise.white_std)},
      {"additive_snr_db", fmt(noise.additive_snr_db)},
      {"mask_mu", fmt(mask_size.mu)},
      {"mask_sigma", fmt(mask_size.sigma)},
      {"seed", std::to_string(seed)},
      {"workers", std::to_string(workers)},
      {"max_samples", std::to_string(max_samples)},
      {"filter_scale", fmt(filter_scale)},
      {"vgg_width", fmt(vgg_width)},
      {"vgg_hidden", std::to_string(vgg_hidden)},
      {"augment", augment ? "true" : "false"},
  };
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ContractViolation("config: lr must be > 0");
  if (epochs < 1) throw ContractViolation("config: epochs must be >= 1");
  if (batch_size < 1) throw ContractViolation("config: batch_size must be >= 1");
  if (workers < 1) throw ContractViolation("config: workers must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractViolation("config: beta1/beta2 must lie in [0, 1)");
  }
  if (!(mask_size.sigma > 0.0)) throw ContractViolation("config: mask_sigma must be > 0");
  if (!(noise.white_std >= 0.0)) throw ContractViolation("config: white_std must be >= 0");
  if (!(filter_scale > 0.0) || !(vgg_width > 0.0)) {
    throw ContractViolation("config: scales must be > 0");
  }
  if (vgg_hidden < 1) throw ContractViolation("config: vgg_hidden must be >= 1");
}

std::uint32_t TrainConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : entries()) {
    if (k == "workers") continue;
    text += k + "=" + v + "\n";
  }
  return nn::crc32_of(text);
}

UNetConfig TrainConfig::unet_config() const {
  UNetConfig u;
  u.mode = mode;
  u.filter_scale = filter_scale;
  return u;
}

SpeechVGGConfig TrainConfig::vgg_config(int classes) const {
  SpeechVGGConfig v;
  v.width_scale = vgg_width;
  v.hidden = vgg_hidden;
  v.classes = classes;
  return v;
}

TrainConfig read_train_config(const std::filesystem::path& path, TrainPhase phase) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  TrainConfig cfg = TrainConfig::defaults(phase);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractViolation(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

void write_run_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [k, v] : cfg.entries()) out << k << " = " << v << "\n";
}

std::string to_json_line(const TrainLogEntry& e) {
  nlohmann::ordered_json j;
  j["step"] = e.step;
  j["epoch"] = e.epoch;
  j["loss"] = e.loss;
  j["lr"] = e.lr;
  return j.dump();
}

std::vector<TrainLogEntry> read_train_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open training log " + path.string());
  std::vector<TrainLogEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("step").get<std::int64_t>(), j.at("epoch").get<int>(),
                     j.at("loss").get<double>(), j.at("lr").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": malformed log line: " + e.what());
    }
  }
  return out;
}

SegmentSet load_segments(const std::vector<UtteranceRecord>& records, const ChannelStats& stats,
                         std::size_t max_segments, int workers) {
  struct Item {
    std::string id;
    LogMagnitude mag;
  };
  auto items = load_chunked<Item>(records, max_segments, workers, [&](const UtteranceRecord& r) {
    std::vector<Item> out;
    const auto segs = segment(read_wav(r.audio_path));
    for (std::size_t i = 0; i < segs.size(); ++i) {
      out.push_back({r.id + "/" + std::to_string(i), normalize(log_magnitude(stft(segs[i])), stats)});
    }
    return out;
  });
  SegmentSet set;
  for (auto& it : items) {
    set.ids.push_back(std::move(it.id));
    set.clean.push_back(std::move(it.mag));
  }
  return set;
}

std::vector<WordSample> load_word_samples(const std::vector<UtteranceRecord>& records,
                                          const std::vector<WordSegment>& alignments,
                                          const Vocabulary& vocab, const ChannelStats& stats,
                                          std::uint64_t seed, std::size_t max_samples,
                                          int workers) {
  std::map<std::string, std::vector<const WordSegment*>> by_utt;
  for (const auto& ws : alignments) by_utt[ws.utterance_id].push_back(&ws);
  std::vector<UtteranceRecord> aligned;
  for (const auto& r : records) {
    if (by_utt.contains(r.id)) aligned.push_back(r);
  }
  return load_chunked<WordSample>(aligned, max_samples, workers, [&](const UtteranceRecord& r) {
    std::vector<WordSample> out;
    const Waveform w = read_wav(r.audio_path);
    const auto& words = by_utt.at(r.id);
    for (std::size_t k = 0; k < words.size(); ++k) {
      auto s = extract_word_sample(w, *words[k], vocab, stats,
                                   derive_seed(seed, hash_string(r.id), k));
      if (s) out.push_back(std::move(*s));
    }
    return out;
  });
}

LogMagnitude corrupt_normalized(const LogMagnitude& clean, const Mask& mask, FillMode fill,
                                const NoiseParams& noise, const ChannelStats* stats,
                                std::uint64_t seed) {
  if (!clean.normalized) throw ContractViolation("corrupt_normalized: input must be normalized");
  const PhaseMatrix zero{TfMatrix::Zero(clean.values.rows(), clean.values.cols())};
  if (fill != FillMode::SpeechShaped) return apply_mask(clean, zero, mask, fill, noise, seed).magnitude;
  if (stats == nullptr) {
    throw ContractViolation("speech-shaped fill needs channel statistics");
  }
  const LogMagnitude raw = denormalize(clean, *stats);
  return normalize(apply_mask(raw, zero, mask, fill, noise, seed).magnitude, *stats);
}

MaskSpec training_mask_spec(const TrainConfig& cfg, int epoch, std::size_t position) {
  const std::uint64_t s = sample_seed(cfg.seed, kMaskStream, epoch, position);
  MaskSpec spec;
  spec.kind = (mix64(s) & 1U) != 0 ? MaskKind::Random : MaskKind::TimeFreq;
  spec.coverage = sample_training_size(cfg.mask_size, derive_seed(s, 1));
  spec.seed = derive_seed(s, 2);
  return spec;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kOrderStream, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// ---------------------------------------------------------------------------

InpainterTrainer::InpainterTrainer(TrainConfig cfg, const SegmentSet& data,
                                   const FeatureExtractor* extractor, const ChannelStats* stats)
    : cfg_(std::move(cfg)),
      data_(&data),
      extractor_(extractor),
      stats_(stats),
      net_(cfg_.unet_config(), derive_seed(cfg_.seed, kInitStream)),
      opt_(adam_config(cfg_)) {
  cfg_.validate();
  if (cfg_.loss == LossKind::DeepFeature && extractor_ == nullptr) {
    throw ModelError("deep-feature loss needs a pretrained extractor checkpoint");
  }
  if (data.size() == 0) throw DataError("no training segments");
  if (cfg_.mode == UNetMode::Blind && cfg_.fill == FillMode::SpeechShaped && stats_ == nullptr) {
    throw ContractViolation("speech-shaped fill needs channel statistics");
  }
}

std::size_t InpainterTrainer::steps_per_epoch() const {
  const auto b = static_cast<std::size_t>(cfg_.batch_size);
  return (data_->size() + b - 1) / b;
}

InpainterTrainer::Batch InpainterTrainer::make_batch(int epoch, std::size_t first) const {
  const auto order = epoch_order(cfg_.seed, epoch, data_->size());
  const std::size_t count = std::min<std::size_t>(cfg_.batch_size, order.size() - first);
  const FillMode fill = cfg_.mode == UNetMode::Informed ? FillMode::Zeros : cfg_.fill;

  std::vector<TfMatrix> inputs(count), targets(count);
  std::vector<ValidMap> masks(count);
  parallel_for(count, cfg_.workers, [&](std::size_t k) {
    const std::size_t pos = first + k;
    const LogMagnitude& clean = data_->clean[order[pos]];
    const MaskSpec spec = training_mask_spec(cfg_, epoch, pos);
    const Mask mask = sample_mask(spec);
    inputs[k] = corrupt_normalized(clean, mask, fill, cfg_.noise, stats_, derive_seed(spec.seed, 3))
                    .values;
    targets[k] = clean.values;
    masks[k] = mask.valid;
  });
  return {nn::stack(inputs), nn::mask_tensor(masks), nn::stack(targets)};
}

double InpainterTrainer::step() {
  if (finished()) throw ContractViolation("training already finished");
  const Batch b = make_batch(epoch_, cursor_);
  const bool informed = cfg_.mode == UNetMode::Informed;

  UNetTape tape;
  const nn::Tensor y_hat = net_.forward(b.input, informed ? &b.mask : nullptr, true, &tape);
  LossAndGrad lg;
  if (cfg_.loss == LossKind::Pixel) {
    lg = pixel_loss_grad(b.target, y_hat);
  } else {
    lg = deep_feature_loss_grad(extractor_->taps(b.target, nullptr), y_hat, *extractor_);
  }
  const nn::Grads grads = net_.backward(tape, lg.grad);
  opt_.step(net_.params(), grads);
  net_.commit_batch_stats(tape);

  ++step_;
  cursor_ += static_cast<std::size_t>(b.input.shape.n);
  epoch_loss_ += lg.loss;
  ++epoch_batches_;
  if (cursor_ >= data_->size()) {
    history_.push_back({epoch_ + 1, epoch_loss_ / double(epoch_batches_), std::nullopt});
    ++epoch_;
    cursor_ = 0;
    epoch_loss_ = 0.0;
    epoch_batches_ = 0;
  }
  return lg.loss;
}

double InpainterTrainer::probe_loss(int epoch) const {
  const Batch b = make_batch(epoch, 0);
  UNetTape tape;
  const nn::Tensor y_hat =
      net_.forward(b.input, cfg_.mode == UNetMode::Informed ? &b.mask : nullptr, true, &tape);
  if (cfg_.loss == LossKind::Pixel) return pixel_loss(b.target, y_hat);
  return deep_feature_loss(b.target, y_hat, *extractor_);
}

void InpainterTrainer::run(const TrainHooks& hooks) {
  while (!finished() && (hooks.stop_after == 0 || step_ < hooks.stop_after)) {
    const int epoch_before = epoch_;
    const double loss = step();
    if (hooks.on_step) hooks.on_step({step_, epoch_before + 1, loss, cfg_.lr});
    if (epoch_ != epoch_before) {
      if (!hooks.checkpoint_dir.empty()) {
        save_epoch_checkpoint(hooks.checkpoint_dir, "model", epoch_, [&](const auto& p) {
          net_.save(p, {{"epoch", std::to_string(epoch_)}, {"run_config_hash", std::to_string(cfg_.hash())}});
        });
        save_state(hooks.checkpoint_dir / "run-state.ckpt");
      }
      if (hooks.on_epoch) hooks.on_epoch(history_.back());
    }
  }
  if (!hooks.checkpoint_dir.empty() && !finished()) save_state(hooks.checkpoint_dir / "run-state.ckpt");
}

void InpainterTrainer::save_state(const std::filesystem::path& path) const {
  nn::Checkpoint c;
  c.kind = "inpainter-run";
  c.config_hash = cfg_.hash();
  c.meta["network"] = net_.config().canonical();
  c.meta["adam_steps"] = std::to_string(opt_.steps());
  put_progress(c, {epoch_, cursor_, step_, epoch_loss_, epoch_batches_, history_}, data_->size());
  for (const auto& [name, t] : net_.params().tensors()) c.tensors.emplace("model." + name, t);
  for (auto& [name, t] : opt_.state()) c.tensors.emplace(name, std::move(t));
  nn::save_checkpoint(path, c);
}

void InpainterTrainer::load_state(const std::filesystem::path& path) {
  const nn::Checkpoint c = nn::load_checkpoint(path);
  if (c.kind != "inpainter-run") {
    throw ModelError(path.string() + " holds a '" + c.kind + "' checkpoint, not an inpainter run");
  }
  if (c.config_hash != cfg_.hash()) {
    throw ModelError(path.string() + ": run configuration differs from the resumed run");
  }
  const Progress p = get_progress(c, path, data_->size());
  std::map<std::string, nn::Tensor> model, adam;
  split_state(c, model, adam);
  net_.params().assign(model);
  opt_.load_state(adam, std::stoll(meta_at(c, "adam_steps", path)));
  epoch_ = p.epoch;
  cursor_ = p.cursor;
  step_ = p.step;
  epoch_loss_ = p.epoch_loss;
  epoch_batches_ = p.epoch_batches;
  history_ = p.history;
}

// ---------------------------------------------------------------------------

ExtractorTrainer::ExtractorTrainer(TrainConfig cfg, const std::vector<WordSample>& train,
                                   Vocabulary vocab, const std::vector<WordSample>* held_out)
    : cfg_(std::move(cfg)),
      train_(&train),
      held_out_(held_out),
      net_(cfg_.vgg_config(static_cast<int>(std::max<std::size_t>(vocab.size(), 1))),
           derive_seed(cfg_.seed, kInitStream)),
      opt_(adam_config(cfg_)) {
  cfg_.validate();
  if (vocab.size() == 0) throw DataError("empty vocabulary");
  if (train.empty()) throw DataError("no word samples to train on");
  const auto classes = static_cast<int>(vocab.size());
  auto check = [&](const std::vector<WordSample>& set) {
    for (const auto& s : set) {
      if (s.label < 0 || s.label >= classes) {
        throw ModelError("word label " + std::to_string(s.label) + " outside a " +
                         std::to_string(classes) + "-way classifier head");
      }
    }
  };
  check(train);
  if (held_out != nullptr) check(*held_out);
  net_.attach_vocabulary(std::move(vocab));
}

std::size_t ExtractorTrainer::steps_per_epoch() const {
  const auto b = static_cast<std::size_t>(cfg_.batch_size);
  return (train_->size() + b - 1) / b;
}

double ExtractorTrainer::step() {
  if (finished()) throw ContractViolation("training already finished");
  const auto order = epoch_order(cfg_.seed, epoch_, train_->size());
  const std::size_t count = std::min<std::size_t>(cfg_.batch_size, order.size() - cursor_);
  std::vector<TfMatrix> feats(count);
  std::vector<int> labels(count);
  parallel_for(count, cfg_.workers, [&](std::size_t k) {
    const std::size_t pos = cursor_ + k;
    const WordSample& s = (*train_)[order[pos]];
    feats[k] = cfg_.augment
                   ? spec_augment(s.features, sample_seed(cfg_.seed, kAugmentStream, epoch_, pos)).values
                   : s.features.values;
    labels[k] = s.label;
  });
  const nn::Tensor x = nn::stack(feats);
  std::unique_ptr<FeatureExtractor::Tape> tape;
  const nn::Tensor z = net_.logits(x, &tape);
  const nn::CrossEntropy ce = nn::softmax_cross_entropy(z, labels);
  opt_.step(net_.params(), net_.logits_backward(*tape, ce.dlogits));

  ++step_;
  cursor_ += count;
  epoch_loss_ += ce.loss;
  ++epoch_batches_;
  if (cursor_ >= train_->size()) {
    EpochSummary e{epoch_ + 1, epoch_loss_ / double(epoch_batches_), std::nullopt};
    if (held_out_ != nullptr && !held_out_->empty()) e.accuracy = accuracy(*held_out_);
    history_.push_back(e);
    ++epoch_;
    cursor_ = 0;
    epoch_loss_ = 0.0;
    epoch_batches_ = 0;
  }
  return ce.loss;
}

double ExtractorTrainer::accuracy(const std::vector<WordSample>& samples) const {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  const std::size_t chunk = 32;
  for (std::size_t first = 0; first < samples.size(); first += chunk) {
    const std::size_t count = std::min(chunk, samples.size() - first);
    std::vector<TfMatrix> feats;
    for (std::size_t k = 0; k < count; ++k) feats.push_back(samples[first + k].features.values);
    const auto pred = net_.classify(nn::stack(feats));
    for (std::size_t k = 0; k < count; ++k) {
      if (pred[k] == samples[first + k].label) ++correct;
    }
  }
  return double(correct) / double(samples.size());
}

void ExtractorTrainer::run(const TrainHooks& hooks) {
  while (!finished() && (hooks.stop_after == 0 || step_ < hooks.stop_after)) {
    const int epoch_before = epoch_;
    const double loss = step();
    if (hooks.on_step) hooks.on_step({step_, epoch_before + 1, loss, cfg_.lr});
    if (epoch_ != epoch_before) {
      if (!hooks.checkpoint_dir.empty()) {
        save_epoch_checkpoint(hooks.checkpoint_dir, "extractor", epoch_, [&](const auto& p) {
          net_.save(p, {{"epoch", std::to_string(epoch_)}});
        });
        save_state(hooks.checkpoint_dir / "run-state.ckpt");
      }
      if (hooks.on_epoch) hooks.on_epoch(history_.back());
    }
  }
  if (!hooks.checkpoint_dir.empty() && !finished()) save_state(hooks.checkpoint_dir / "run-state.ckpt");
}

void ExtractorTrainer::save_state(const std::filesystem::path& path) const {
  nn::Checkpoint c;
  c.kind = "extractor-run";
  c.config_hash = cfg_.hash();
  c.meta["network"] = net_.config().canonical();
  c.meta["adam_steps"] = std::to_string(opt_.steps());
  put_progress(c, {epoch_, cursor_, step_, epoch_loss_, epoch_batches_, history_}, train_->size());
  for (const auto& [name, t] : net_.params().tensors()) c.tensors.emplace("model." + name, t);
  for (auto& [name, t] : opt_.state()) c.tensors.emplace(name, std::move(t));
  nn::save_checkpoint(path, c);
}

void ExtractorTrainer::load_state(const std::filesystem::path& path) {
  const nn::Checkpoint c = nn::load_checkpoint(path);
  if (c.kind != "extractor-run") {
    throw ModelError(path.string() + " holds a '" + c.kind + "' checkpoint, not an extractor run");
  }
  if (c.config_hash != cfg_.hash()) {
    throw ModelError(path.string() + ": run configuration differs from the resumed run");
  }
  if (meta_at(c, "network", path) != net_.config().canonical()) {
    throw ModelError(path.string() + ": classifier head does not match the vocabulary size");
  }
  const Progress p = get_progress(c, path, train_->size());
  std::map<std::string, nn::Tensor> model, adam;
  split_state(c, model, adam);
  net_.params().assign(model);
  opt_.load_state(adam, std::stoll(meta_at(c, "adam_steps", path)));
  epoch_ = p.epoch;
  cursor_ = p.cursor;
  step_ = p.step;
  epoch_loss_ = p.epoch_loss;
  epoch_batches_ = p.epoch_batches;
  history_ = p.history;
}

}  // namespace sinpaint
