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

// Speech feature extractor (VGG-style word classifier), its pooling taps and
// the deep-feature and per-pixel L1 losses.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sinpaint/corpus.hpp"
#include "sinpaint/nn.hpp"

namespace sinpaint {

// Anything that maps a batch of inputs to a list of activation tensors and
// can push gradients from those activations back to the input.
class FeatureExtractor {
 public:
  class Tape {
   public:
    virtual ~Tape() = default;
  };

  virtual ~FeatureExtractor() = default;
  virtual std::vector<nn::Tensor> taps(const nn::Tensor& x, std::unique_ptr<Tape>* tape) const = 0;
  virtual nn::Tensor taps_backward(const Tape& tape, const std::vector<nn::Tensor>& dtaps) const = 0;
};

// Single tap equal to the input.
class IdentityExtractor final : public FeatureExtractor {
 public:
  std::vector<nn::Tensor> taps(const nn::Tensor& x, std::unique_ptr<Tape>* tape) const override;
  nn::Tensor taps_backward(const Tape& tape, const std::vector<nn::Tensor>& dtaps) const override;
};

struct SpeechVGGConfig {
  std::vector<int> block_convs{2, 2, 3, 3, 3};
  std::vector<int> block_channels{64, 128, 256, 512, 512};
  double width_scale = 1.0;
  int hidden = 4096;
  int classes = 1000;
  int input_size = kNumBins;

  int channels(std::size_t block) const;
  std::string canonical() const;
  static SpeechVGGConfig parse(const std::string& canonical);
  std::uint32_t hash() const;
  void validate() const;
};

class SpeechVGG final : public FeatureExtractor {
 public:
  explicit SpeechVGG(SpeechVGGConfig cfg, std::uint64_t init_seed = 0);

  const SpeechVGGConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Outputs of the five pooling layers.
  std::vector<nn::Tensor> taps(const nn::Tensor& x, std::unique_ptr<Tape>* tape) const override;
  nn::Tensor taps_backward(const Tape& tape, const std::vector<nn::Tensor>& dtaps) const override;

  // Class scores [n, classes, 1, 1].
  nn::Tensor logits(const nn::Tensor& x, std::unique_ptr<Tape>* tape) const;
  nn::Grads logits_backward(const Tape& tape, const nn::Tensor& dlogits) const;

  std::vector<int> classify(const nn::Tensor& x) const;

  const Vocabulary& vocabulary() const { return vocab_; }
  void attach_vocabulary(Vocabulary v);

  void save(const std::filesystem::path& path,
            const std::map<std::string, std::string>& meta = {}) const;
  static SpeechVGG load(const std::filesystem::path& path);

 private:
  struct VggTape;
  void build();
  std::vector<nn::Tensor> run_blocks(const nn::Tensor& x, VggTape* tape) const;
  nn::Tensor backward_blocks(const VggTape& tape, const std::vector<nn::Tensor>& dtaps,
                             nn::Grads* grads) const;

  SpeechVGGConfig cfg_;
  nn::ParamStore params_;
  Vocabulary vocab_;
};

// Index of the largest value; ties go to the lowest index.
int argmax_lowest(std::span<const double> values);

// Sum over taps of the mean absolute elementwise difference.
double deep_feature_loss(const nn::Tensor& y, const nn::Tensor& y_hat,
                         const FeatureExtractor& extractor);
double deep_feature_loss(const LogMagnitude& y, const LogMagnitude& y_hat,
                         const FeatureExtractor& extractor);

struct LossAndGrad {
  double loss = 0.0;
  nn::Tensor grad;  // d loss / d y_hat
};

// Loss against precomputed target taps, with the gradient for y_hat.
LossAndGrad deep_feature_loss_grad(const std::vector<nn::Tensor>& target_taps,
                                   const nn::Tensor& y_hat, const FeatureExtractor& extractor);

double pixel_loss(const nn::Tensor& y, const nn::Tensor& y_hat);
double pixel_loss(const TfMatrix& y, const TfMatrix& y_hat);
LossAndGrad pixel_loss_grad(const nn::Tensor& y, const nn::Tensor& y_hat);

}  // namespace sinpaint
