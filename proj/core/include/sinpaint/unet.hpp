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

// Encoder-decoder inpainting network. Informed mode uses partial
// convolutions driven by the validity mask; blind mode uses plain
// convolutions on the corrupted input alone.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sinpaint/nn.hpp"

namespace sinpaint {

enum class UNetMode { Informed, Blind };

std::string to_string(UNetMode m);
UNetMode parse_unet_mode(const std::string& s);

struct ConvSpec {
  int kernel = 3;
  int filters = 1;
};

struct UNetConfig {
  UNetMode mode = UNetMode::Informed;
  std::vector<ConvSpec> encoders{{7, 16}, {5, 32}, {5, 64}, {3, 128}, {3, 128}, {3, 128}};
  // Deepest first: decoder blocks 6..1. Block 0 is a 1x1 linear conv.
  std::vector<ConvSpec> decoders{{3, 128}, {3, 128}, {3, 64}, {3, 32}, {3, 16}, {3, 1}};
  double leaky_slope = 0.2;
  double filter_scale = 1.0;
  int input_size = kNumBins;
  nn::BatchNormParams batch_norm;

  int encoder_filters(std::size_t i) const;
  int decoder_filters(std::size_t i) const;
  // Stable key=value text; round-trips through parse().
  std::string canonical() const;
  static UNetConfig parse(const std::string& canonical);
  std::uint32_t hash() const;
  void validate() const;
};

// Closed-form trainable parameter count.
std::size_t unet_parameter_count(const UNetConfig& cfg);

// Intermediate values kept for the backward pass.
struct UNetTape {
  struct Block {
    nn::Tensor input;
    nn::Tensor mask;  // informed only
    nn::PartialConvOut conv;  // mask/scale empty in blind mode
    nn::BatchNormCache bn;
    nn::Tensor normalized;
  };
  std::vector<Block> encoders;
  std::vector<Block> decoders;  // same order as UNetConfig::decoders
  std::vector<int> skip_channels;
  nn::Tensor head_input;
  bool training = false;
};

class UNet {
 public:
  explicit UNet(UNetConfig cfg, std::uint64_t init_seed = 0);

  const UNetConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // input: [n, 1, s, s] normalized log-magnitudes. mask: [n, 1, s, s] with
  // 1 = valid, required in informed mode and ignored in blind mode.
  // Training mode normalizes with batch statistics and needs a tape.
  nn::Tensor forward(const nn::Tensor& input, const nn::Tensor* mask, bool training,
                     UNetTape* tape = nullptr) const;

  // Gradients of every trainable parameter for upstream gradient `dout`.
  nn::Grads backward(const UNetTape& tape, const nn::Tensor& dout) const;

  // Folds the batch statistics from a training-mode tape into the running
  // averages used in evaluation mode.
  void commit_batch_stats(const UNetTape& tape);

  void save(const std::filesystem::path& path,
            const std::map<std::string, std::string>& meta = {}) const;
  // Rebuilds the network from the configuration stored in the file.
  static UNet load(const std::filesystem::path& path);
  // Refuses files whose configuration hash differs from `expected`.
  static UNet load(const std::filesystem::path& path, const UNetConfig& expected);

 private:
  void build();

  UNetConfig cfg_;
  nn::ParamStore params_;
};

// Single-segment convenience wrapper around eval-mode forward.
LogMagnitude inpaint(const UNet& net, const LogMagnitude& input, const ValidMap* valid);

}  // namespace sinpaint
