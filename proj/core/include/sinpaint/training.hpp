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

// Extractor pretraining and inpainter training: run configuration, data
// loading, seeded batch construction, resumable run state and the JSON-lines
// training log.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sinpaint/corpus.hpp"
#include "sinpaint/dsp.hpp"
#include "sinpaint/feature_loss.hpp"
#include "sinpaint/mask.hpp"
#include "sinpaint/nn.hpp"
#include "sinpaint/unet.hpp"

namespace sinpaint {

enum class TrainPhase { PretrainVGG, TrainInpainter };
enum class LossKind { DeepFeature, Pixel };

std::string to_string(TrainPhase p);
std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct TrainConfig {
  TrainPhase phase = TrainPhase::TrainInpainter;
  int epochs = 30;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 16;
  LossKind loss = LossKind::DeepFeature;
  UNetMode mode = UNetMode::Informed;
  FillMode fill = FillMode::Zeros;
  NoiseParams noise;
  MaskSizeSampler mask_size;
  std::uint64_t seed = 0;
  int workers = 1;
  std::size_t max_samples = 0;  // 0 = everything available
  double filter_scale = 1.0;
  double vgg_width = 1.0;
  int vgg_hidden = 4096;
  bool augment = true;  // SpecAugment during pretraining

  static TrainConfig defaults(TrainPhase phase);

  // Throws ContractViolation for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> entries() const;
  void validate() const;

  // Fields that change what is learned; excludes workers.
  std::uint32_t hash() const;
  UNetConfig unet_config() const;
  SpeechVGGConfig vgg_config(int classes) const;
};

// Reads `key = value` lines ('#' starts a comment) on top of the phase
// defaults.
TrainConfig read_train_config(const std::filesystem::path& path, TrainPhase phase);
void write_run_config(const std::filesystem::path& path, const TrainConfig& cfg);

struct TrainLogEntry {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

std::string to_json_line(const TrainLogEntry& e);
std::vector<TrainLogEntry> read_train_log(const std::filesystem::path& path);

// Clean normalized log-magnitude segments with stable ids "<utt>/<index>".
struct SegmentSet {
  std::vector<std::string> ids;
  std::vector<LogMagnitude> clean;

  std::size_t size() const { return clean.size(); }
};

SegmentSet load_segments(const std::vector<UtteranceRecord>& records, const ChannelStats& stats,
                         std::size_t max_segments, int workers);

// Word samples for every aligned word of `records` that is in the vocabulary.
std::vector<WordSample> load_word_samples(const std::vector<UtteranceRecord>& records,
                                          const std::vector<WordSegment>& alignments,
                                          const Vocabulary& vocab, const ChannelStats& stats,
                                          std::uint64_t seed, std::size_t max_samples,
                                          int workers);

// The model input for a clean normalized segment: masked with the training
// fill (zeros in informed mode). Speech-shaped filling round-trips through
// the denormalized domain and needs `stats`.
LogMagnitude corrupt_normalized(const LogMagnitude& clean, const Mask& mask, FillMode fill,
                                const NoiseParams& noise, const ChannelStats* stats,
                                std::uint64_t seed);

// Mask drawn for sample `position` of epoch `epoch`: kind uniform over
// {TimeFreq, Random}, coverage from the size sampler.
MaskSpec training_mask_spec(const TrainConfig& cfg, int epoch, std::size_t position);

// Sample order of one epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n);

struct EpochSummary {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> accuracy;  // pretraining: held-out accuracy
};

struct TrainHooks {
  std::function<void(const TrainLogEntry&)> on_step;
  std::function<void(const EpochSummary&)> on_epoch;
  // Stop once this many steps have been taken in total (0 = no limit).
  std::int64_t stop_after = 0;
  // When set: per-epoch model checkpoints plus run-state.ckpt for resuming.
  std::filesystem::path checkpoint_dir;
};

class InpainterTrainer {
 public:
  // `extractor` is required for the deep-feature loss and must outlive the
  // trainer. `stats` is needed only for the speech-shaped fill.
  InpainterTrainer(TrainConfig cfg, const SegmentSet& data, const FeatureExtractor* extractor,
                   const ChannelStats* stats = nullptr);

  const TrainConfig& config() const { return cfg_; }
  const UNet& model() const { return net_; }
  int epoch() const { return epoch_; }
  std::int64_t step_count() const { return step_; }
  bool finished() const { return epoch_ >= cfg_.epochs; }
  std::size_t steps_per_epoch() const;

  // One optimizer step; returns the batch loss.
  double step();
  void run(const TrainHooks& hooks);

  // Loss of the first batch of `epoch` without updating anything.
  double probe_loss(int epoch) const;

  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

  const std::vector<EpochSummary>& history() const { return history_; }

 private:
  struct Batch {
    nn::Tensor input, mask, target;
  };
  Batch make_batch(int epoch, std::size_t first) const;

  TrainConfig cfg_;
  const SegmentSet* data_;
  const FeatureExtractor* extractor_;
  const ChannelStats* stats_;
  UNet net_;
  nn::Adam opt_;
  int epoch_ = 0;
  std::size_t cursor_ = 0;  // samples consumed in the current epoch
  std::int64_t step_ = 0;
  double epoch_loss_ = 0.0;
  std::size_t epoch_batches_ = 0;
  std::vector<EpochSummary> history_;
};

class ExtractorTrainer {
 public:
  ExtractorTrainer(TrainConfig cfg, const std::vector<WordSample>& train, Vocabulary vocab,
                   const std::vector<WordSample>* held_out = nullptr);

  const SpeechVGG& model() const { return net_; }
  int epoch() const { return epoch_; }
  std::int64_t step_count() const { return step_; }
  bool finished() const { return epoch_ >= cfg_.epochs; }
  std::size_t steps_per_epoch() const;

  double step();
  void run(const TrainHooks& hooks);

  // Fraction of samples classified correctly (no augmentation).
  double accuracy(const std::vector<WordSample>& samples) const;

  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

  const std::vector<EpochSummary>& history() const { return history_; }

 private:
  TrainConfig cfg_;
  const std::vector<WordSample>* train_;
  const std::vector<WordSample>* held_out_;
  SpeechVGG net_;
  nn::Adam opt_;
  int epoch_ = 0;
  std::size_t cursor_ = 0;
  std::int64_t step_ = 0;
  double epoch_loss_ = 0.0;
  std::size_t epoch_batches_ = 0;
  std::vector<EpochSummary> history_;
};

}  // namespace sinpaint
