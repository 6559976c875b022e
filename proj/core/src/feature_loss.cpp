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

#include "sinpaint/feature_loss.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "sinpaint/error.hpp"

namespace sinpaint {

namespace {

using nn::Shape;
using nn::Tensor;

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

std::string conv_name(std::size_t block, int layer) {
  return "b" + std::to_string(block + 1) + ".c" + std::to_string(layer + 1);
}

class IdentityTape final : public FeatureExtractor::Tape {};

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape == b.shape)) {
    throw ContractViolation("loss: shape " + nn::to_string(a.shape) + " vs " + nn::to_string(b.shape));
  }
  if (a.data.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return acc / double(a.data.size());
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<Tensor> IdentityExtractor::taps(const Tensor& x, std::unique_ptr<Tape>* tape) const {
  if (tape != nullptr) *tape = std::make_unique<IdentityTape>();
  return {x};
}

Tensor IdentityExtractor::taps_backward(const Tape&, const std::vector<Tensor>& dtaps) const {
  if (dtaps.size() != 1) throw ContractViolation("identity extractor has one tap");
  return dtaps[0];
}

int SpeechVGGConfig::channels(std::size_t block) const {
  return std::max(1, static_cast<int>(std::lround(block_channels.at(block) * width_scale)));
}

std::string SpeechVGGConfig::canonical() const {
  char scale[40];
  std::snprintf(scale, sizeof scale, "%.17g", width_scale);
  return "convs=" + join_ints(block_convs) + ";channels=" + join_ints(block_channels) +
         ";scale=" + scale + ";hidden=" + std::to_string(hidden) +
         ";classes=" + std::to_string(classes) + ";size=" + std::to_string(input_size);
}

SpeechVGGConfig SpeechVGGConfig::parse(const std::string& canonical) {
  SpeechVGGConfig cfg;
  std::stringstream ss(canonical);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ModelError("bad extractor config entry '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "convs") cfg.block_convs = split_ints(value);
    else if (key == "channels") cfg.block_channels = split_ints(value);
    else if (key == "scale") cfg.width_scale = std::stod(value);
    else if (key == "hidden") cfg.hidden = std::stoi(value);
    else if (key == "classes") cfg.classes = std::stoi(value);
    else if (key == "size") cfg.input_size = std::stoi(value);
    else throw ModelError("unknown extractor config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

std::uint32_t SpeechVGGConfig::hash() const { return nn::crc32_of(canonical()); }

void SpeechVGGConfig::validate() const {
  if (block_convs.empty() || block_convs.size() != block_channels.size()) {
    throw ContractViolation("extractor needs matching conv and channel lists");
  }
  if (input_size <= 0 || input_size % (1 << block_convs.size()) != 0) {
    throw ContractViolation("extractor input size must be divisible by 2^blocks");
  }
  if (hidden < 1 || classes < 1 || !(width_scale > 0.0)) {
    throw ContractViolation("extractor hidden, classes and width scale must be positive");
  }
}

struct SpeechVGG::VggTape final : FeatureExtractor::Tape {
  struct Conv {
    Tensor input, pre;
  };
  std::vector<std::vector<Conv>> convs;
  std::vector<nn::PoolOut> pools;
  std::vector<Shape> pool_inputs;
  Tensor hidden_pre, hidden;
};

SpeechVGG::SpeechVGG(SpeechVGGConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build();
  nn::init_he_uniform(params_, init_seed);
}

void SpeechVGG::build() {
  int cin = 1;
  for (std::size_t b = 0; b < cfg_.block_convs.size(); ++b) {
    const int cout = cfg_.channels(b);
    for (int l = 0; l < cfg_.block_convs[b]; ++l) {
      params_.add(conv_name(b, l) + ".weight", Shape{cout, cin, 3, 3}, true);
      params_.add(conv_name(b, l) + ".bias", Shape{1, cout, 1, 1}, true);
      cin = cout;
    }
  }
  const int side = cfg_.input_size >> cfg_.block_convs.size();
  const int flat = cin * side * side;
  params_.add("fc1.weight", Shape{cfg_.hidden, flat, 1, 1}, true);
  params_.add("fc1.bias", Shape{1, cfg_.hidden, 1, 1}, true);
  params_.add("fc2.weight", Shape{cfg_.classes, cfg_.hidden, 1, 1}, true);
  params_.add("fc2.bias", Shape{1, cfg_.classes, 1, 1}, true);
}

std::vector<Tensor> SpeechVGG::run_blocks(const Tensor& x, VggTape* tape) const {
  if (x.shape.c != 1 || x.shape.h != cfg_.input_size || x.shape.w != cfg_.input_size) {
    throw ContractViolation("extractor input must be [n,1," + std::to_string(cfg_.input_size) +
                            "," + std::to_string(cfg_.input_size) + "], got " +
                            nn::to_string(x.shape));
  }
  std::vector<Tensor> taps;
  Tensor h = x;
  if (tape != nullptr) {
    tape->convs.assign(cfg_.block_convs.size(), {});
    tape->pools.clear();
    tape->pool_inputs.clear();
  }
  for (std::size_t b = 0; b < cfg_.block_convs.size(); ++b) {
    for (int l = 0; l < cfg_.block_convs[b]; ++l) {
      const std::string name = conv_name(b, l);
      Tensor z = nn::conv2d(h, params_.get(name + ".weight"), params_.get(name + ".bias"), 1);
      Tensor a = nn::leaky_relu(z, 0.0);
      if (tape != nullptr) tape->convs[b].push_back({std::move(h), std::move(z)});
      h = std::move(a);
    }
    nn::PoolOut pool = nn::max_pool2(h);
    taps.push_back(pool.y);
    if (tape != nullptr) {
      tape->pool_inputs.push_back(h.shape);
      tape->pools.push_back(std::move(pool));
    }
    h = taps.back();
  }
  return taps;
}

Tensor SpeechVGG::backward_blocks(const VggTape& tape, const std::vector<Tensor>& dtaps,
                                  nn::Grads* grads) const {
  const std::size_t blocks = cfg_.block_convs.size();
  if (dtaps.size() != blocks) throw ContractViolation("extractor backward expects one grad per tap");
  Tensor d;
  for (std::size_t b = blocks; b-- > 0;) {
    const Tensor& own = dtaps[b];
    if (d.data.empty()) {
      d = own.data.empty() ? Tensor(tape.pools[b].y.shape) : own;
    } else if (!own.data.empty()) {
      for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += own.data[i];
    }
    d = nn::max_pool2_backward(tape.pools[b], tape.pool_inputs[b], d);
    for (int l = cfg_.block_convs[b]; l-- > 0;) {
      const auto& conv = tape.convs[b][static_cast<std::size_t>(l)];
      const std::string name = conv_name(b, l);
      const Tensor dz = nn::leaky_relu_backward(conv.pre, d, 0.0);
      const bool first = b == 0 && l == 0;
      const bool need_dx = !first || grads == nullptr;
      auto g = nn::conv2d_backward(conv.input, params_.get(name + ".weight"), 1, dz, need_dx);
      if (grads != nullptr) {
        (*grads)[name + ".weight"] = std::move(g.dweight);
        (*grads)[name + ".bias"] = std::move(g.dbias);
      }
      d = std::move(g.dx);
    }
  }
  return d;
}

std::vector<Tensor> SpeechVGG::taps(const Tensor& x, std::unique_ptr<Tape>* tape) const {
  if (tape == nullptr) return run_blocks(x, nullptr);
  auto t = std::make_unique<VggTape>();
  auto out = run_blocks(x, t.get());
  *tape = std::move(t);
  return out;
}

Tensor SpeechVGG::taps_backward(const Tape& tape, const std::vector<Tensor>& dtaps) const {
  const auto* t = dynamic_cast<const VggTape*>(&tape);
  if (t == nullptr) throw ContractViolation("tape was not produced by this extractor");
  return backward_blocks(*t, dtaps, nullptr);
}

Tensor SpeechVGG::logits(const Tensor& x, std::unique_ptr<Tape>* tape) const {
  auto t = std::make_unique<VggTape>();
  auto taps = run_blocks(x, tape != nullptr ? t.get() : nullptr);
  Tensor pre = nn::dense(taps.back(), params_.get("fc1.weight"), params_.get("fc1.bias"));
  Tensor hidden = nn::leaky_relu(pre, 0.0);
  Tensor out = nn::dense(hidden, params_.get("fc2.weight"), params_.get("fc2.bias"));
  if (tape != nullptr) {
    t->hidden_pre = std::move(pre);
    t->hidden = std::move(hidden);
    *tape = std::move(t);
  }
  return out;
}

nn::Grads SpeechVGG::logits_backward(const Tape& tape, const Tensor& dlogits) const {
  const auto* t = dynamic_cast<const VggTape*>(&tape);
  if (t == nullptr || t->hidden.data.empty()) {
    throw ContractViolation("tape was not produced by SpeechVGG::logits");
  }
  nn::Grads grads = nn::zero_grads(params_);
  auto g2 = nn::dense_backward(t->hidden, params_.get("fc2.weight"), dlogits, true);
  grads["fc2.weight"] = std::move(g2.dweight);
  grads["fc2.bias"] = std::move(g2.dbias);
  const Tensor dpre = nn::leaky_relu_backward(t->hidden_pre, g2.dx, 0.0);
  const Tensor& flat = t->pools.back().y;
  auto g1 = nn::dense_backward(flat, params_.get("fc1.weight"), dpre, true);
  grads["fc1.weight"] = std::move(g1.dweight);
  grads["fc1.bias"] = std::move(g1.dbias);
  std::vector<Tensor> dtaps(cfg_.block_convs.size());
  g1.dx.shape = flat.shape;
  dtaps.back() = std::move(g1.dx);
  backward_blocks(*t, dtaps, &grads);
  return grads;
}

std::vector<int> SpeechVGG::classify(const Tensor& x) const {
  const Tensor z = logits(x, nullptr);
  std::vector<int> out;
  const auto k = static_cast<std::size_t>(cfg_.classes);
  for (int n = 0; n < z.shape.n; ++n) {
    out.push_back(argmax_lowest({z.data.data() + static_cast<std::size_t>(n) * k, k}));
  }
  return out;
}

void SpeechVGG::attach_vocabulary(Vocabulary v) {
  if (static_cast<int>(v.size()) != cfg_.classes) {
    throw ModelError("vocabulary has " + std::to_string(v.size()) + " words but the classifier has " +
                     std::to_string(cfg_.classes) + " outputs");
  }
  vocab_ = std::move(v);
}

void SpeechVGG::save(const std::filesystem::path& path,
                     const std::map<std::string, std::string>& meta) const {
  nn::Checkpoint ckpt;
  ckpt.kind = "speechvgg";
  ckpt.config_hash = cfg_.hash();
  ckpt.meta = meta;
  ckpt.meta["config"] = cfg_.canonical();
  std::string words;
  for (const auto& w : vocab_.words()) words += w + "\n";
  ckpt.meta["vocabulary"] = words;
  ckpt.tensors = params_.tensors();
  nn::save_checkpoint(path, ckpt);
}

SpeechVGG SpeechVGG::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (ckpt.kind != "speechvgg") {
    throw ModelError(path.string() + " holds a '" + ckpt.kind + "' checkpoint, not an extractor");
  }
  const auto it = ckpt.meta.find("config");
  if (it == ckpt.meta.end()) throw ModelError(path.string() + ": extractor config missing");
  SpeechVGGConfig cfg = SpeechVGGConfig::parse(it->second);
  if (cfg.hash() != ckpt.config_hash) {
    throw ModelError(path.string() + ": stored config does not match its hash");
  }
  SpeechVGG net(cfg);
  net.params_.assign(ckpt.tensors);
  if (const auto v = ckpt.meta.find("vocabulary"); v != ckpt.meta.end() && !v->second.empty()) {
    std::vector<std::string> words;
    std::stringstream ss(v->second);
    std::string w;
    while (std::getline(ss, w)) {
      if (!w.empty()) words.push_back(w);
    }
    net.attach_vocabulary(Vocabulary(std::move(words)));
  }
  return net;
}

int argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

double deep_feature_loss(const Tensor& y, const Tensor& y_hat, const FeatureExtractor& extractor) {
  const auto a = extractor.taps(y, nullptr);
  const auto b = extractor.taps(y_hat, nullptr);
  double total = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) total += mean_abs_diff(a[t], b[t]);
  return total;
}

double deep_feature_loss(const LogMagnitude& y, const LogMagnitude& y_hat,
                         const FeatureExtractor& extractor) {
  if (!y.normalized || !y_hat.normalized) {
    throw ContractViolation("deep_feature_loss: inputs must be normalized");
  }
  const Tensor a = nn::stack(std::span<const TfMatrix>(&y.values, 1));
  const Tensor b = nn::stack(std::span<const TfMatrix>(&y_hat.values, 1));
  return deep_feature_loss(a, b, extractor);
}

LossAndGrad deep_feature_loss_grad(const std::vector<Tensor>& target_taps, const Tensor& y_hat,
                                   const FeatureExtractor& extractor) {
  std::unique_ptr<FeatureExtractor::Tape> tape;
  const auto taps = extractor.taps(y_hat, &tape);
  if (taps.size() != target_taps.size()) throw ContractViolation("tap count mismatch");
  LossAndGrad out;
  std::vector<Tensor> dtaps;
  for (std::size_t t = 0; t < taps.size(); ++t) {
    out.loss += mean_abs_diff(target_taps[t], taps[t]);
    Tensor d(taps[t].shape);
    const double inv = 1.0 / double(std::max<std::size_t>(d.data.size(), 1));
    for (std::size_t i = 0; i < d.data.size(); ++i) {
      d.data[i] = sign(taps[t].data[i] - target_taps[t].data[i]) * inv;
    }
    dtaps.push_back(std::move(d));
  }
  out.grad = extractor.taps_backward(*tape, dtaps);
  return out;
}

double pixel_loss(const Tensor& y, const Tensor& y_hat) { return mean_abs_diff(y, y_hat); }

double pixel_loss(const TfMatrix& y, const TfMatrix& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
    throw ContractViolation("pixel_loss: shapes differ");
  }
  if (y.size() == 0) return 0.0;
  return (y - y_hat).abs().mean();
}

LossAndGrad pixel_loss_grad(const Tensor& y, const Tensor& y_hat) {
  LossAndGrad out;
  out.loss = mean_abs_diff(y, y_hat);
  out.grad = Tensor(y_hat.shape);
  const double inv = 1.0 / double(std::max<std::size_t>(y.data.size(), 1));
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    out.grad.data[i] = sign(y_hat.data[i] - y.data[i]) * inv;
  }
  return out;
}

}  // namespace sinpaint
