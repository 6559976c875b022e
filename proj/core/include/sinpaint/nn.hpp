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

// Minimal NCHW tensor and the layer primitives used by the inpainting U-Net
// and the speech feature extractor. Every forward op is a pure function;
// backward ops take whatever the forward pass returned.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sinpaint/dsp.hpp"

namespace sinpaint::nn {

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Fixed alignment keeps vectorized reductions independent of where the heap
// puts a buffer, so results are reproducible bit for bit.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct Tensor {
  Shape shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), data(s.size(), fill) {}

  std::size_t size() const { return data.size(); }
  double& at(int n, int c, int h, int w) { return data[index(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data[index(n, c, h, w)]; }
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w;
  }
  std::span<double> sample(int n) {
    const std::size_t len = shape.size() / static_cast<std::size_t>(shape.n);
    return {data.data() + len * static_cast<std::size_t>(n), len};
  }
  std::span<const double> sample(int n) const {
    const std::size_t len = shape.size() / static_cast<std::size_t>(shape.n);
    return {data.data() + len * static_cast<std::size_t>(n), len};
  }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const;
  bool operator==(const Tensor&) const = default;
};

// Stacks time-frequency matrices into an N x 1 x bins x frames tensor.
Tensor stack(std::span<const TfMatrix> items);
TfMatrix unstack(const Tensor& t, int n);
Tensor mask_tensor(std::span<const ValidMap> masks);

// TensorFlow-style 'same' padding.
int same_out(int in, int stride);
int same_pad_before(int in, int kernel, int stride);

// Weights: [cout, cin, kh, kw]. Bias: [1, cout, 1, 1].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride);

struct ConvGrads {
  Tensor dx;  // left empty when not requested
  Tensor dweight;
  Tensor dbias;
};

ConvGrads conv2d_backward(const Tensor& x, const Tensor& weight, int stride, const Tensor& dy,
                          bool need_dx);

struct PartialConvOut {
  Tensor y;
  Tensor mask;   // [n, 1, ho, wo], 1 = valid
  Tensor scale;  // window size / valid count, 0 where no valid input
};

// Convolution over valid inputs only, renormalized by the valid count in each
// window. `mask` is a single-channel [n, 1, h, w] map; positions outside the
// image count as valid.
PartialConvOut partial_conv2d(const Tensor& x, const Tensor& mask, const Tensor& weight,
                              const Tensor& bias, int stride);

ConvGrads partial_conv2d_backward(const Tensor& x, const Tensor& mask, const Tensor& weight,
                                  int stride, const PartialConvOut& out, const Tensor& dy,
                                  bool need_dx);

struct BatchNormParams {
  double momentum = 0.99;
  double eps = 1e-3;
};

struct BatchNormCache {
  Tensor xhat;
  std::vector<double> mean, var, inv_std;
};

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const BatchNormParams& p, BatchNormCache& cache);
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var,
                       const BatchNormParams& p);

struct BatchNormGrads {
  Tensor dx, dgamma, dbeta;
};

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                   const Tensor& dy);

// Exponential moving average of batch statistics into running buffers.
void update_running_stats(const BatchNormCache& cache, const BatchNormParams& p,
                          Tensor& running_mean, Tensor& running_var);

Tensor leaky_relu(const Tensor& x, double slope);
// dy scaled by the slope wherever the forward input was negative.
Tensor leaky_relu_backward(const Tensor& x, const Tensor& dy, double slope);

struct PoolOut {
  Tensor y;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

PoolOut max_pool2(const Tensor& x);
Tensor max_pool2_backward(const PoolOut& out, const Shape& input, const Tensor& dy);

Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& dy);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, int channels_a, Tensor& da, Tensor& db);

// Pointwise maximum of two single-channel masks.
Tensor mask_union(const Tensor& a, const Tensor& b);

// x: [n, f, 1, 1] (any c*h*w is flattened). weight: [out, f, 1, 1].
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);
ConvGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, bool need_dx);

struct CrossEntropy {
  double loss = 0.0;  // mean over the batch
  Tensor dlogits;
};

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Named parameter and buffer tensors in a stable (sorted) order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Shape shape, bool trainable, double fill = 0.0);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.contains(name); }
  bool trainable(const std::string& name) const;
  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  std::size_t trainable_count() const;
  std::map<std::string, Tensor> tensors() const;
  // Replaces values; shapes and the name set must match.
  void assign(const std::map<std::string, Tensor>& values);

 private:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };
  std::map<std::string, Entry> entries_;
};

using Grads = std::map<std::string, Tensor>;

Grads zero_grads(const ParamStore& params);

// He-uniform initialization for every trainable tensor whose name ends in
// ".weight"; biases and betas stay zero, gammas one.
void init_he_uniform(ParamStore& params, std::uint64_t seed);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStore& params, const Grads& grads);
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // Moments keyed "adam.m.<name>" / "adam.v.<name>".
  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& state, std::int64_t steps);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;  // "unet", "speechvgg", "run-state", ...
  std::uint32_t config_hash = 0;
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;
};

// Binary container: magic, version, config hash, metadata, named tensors and
// a trailing CRC-32 over everything before it.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32_of(std::string_view text);

}  // namespace sinpaint::nn
