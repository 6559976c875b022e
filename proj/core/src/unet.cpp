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

#include "sinpaint/unet.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "sinpaint/error.hpp"

namespace sinpaint {

namespace {

using nn::Shape;
using nn::Tensor;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string specs_to_string(const std::vector<ConvSpec>& specs) {
  std::string out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(specs[i].kernel) + "x" + std::to_string(specs[i].filters);
  }
  return out;
}

std::vector<ConvSpec> parse_specs(const std::string& text) {
  std::vector<ConvSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw ModelError("bad layer spec '" + item + "'");
    out.push_back({std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1))});
  }
  return out;
}

std::string encoder_name(std::size_t i) { return "enc" + std::to_string(i + 1); }

// Decoder list index j holds block number (blocks - j).
std::string decoder_name(std::size_t j, std::size_t blocks) {
  return "dec" + std::to_string(blocks - j);
}

void add_conv_block(nn::ParamStore& p, const std::string& name, int cin, int cout, int k) {
  p.add(name + ".weight", Shape{cout, cin, k, k}, true);
  p.add(name + ".bias", Shape{1, cout, 1, 1}, true);
  p.add(name + ".gamma", Shape{1, cout, 1, 1}, true, 1.0);
  p.add(name + ".beta", Shape{1, cout, 1, 1}, true);
  p.add(name + ".running_mean", Shape{1, cout, 1, 1}, false);
  p.add(name + ".running_var", Shape{1, cout, 1, 1}, false, 1.0);
}

}  // namespace

std::string to_string(UNetMode m) { return m == UNetMode::Informed ? "informed" : "blind"; }

UNetMode parse_unet_mode(const std::string& s) {
  if (s == "informed") return UNetMode::Informed;
  if (s == "blind") return UNetMode::Blind;
  throw ContractViolation("unknown network mode '" + s + "' (informed, blind)");
}

int UNetConfig::encoder_filters(std::size_t i) const {
  return std::max(1, static_cast<int>(std::lround(encoders.at(i).filters * filter_scale)));
}

int UNetConfig::decoder_filters(std::size_t i) const {
  return std::max(1, static_cast<int>(std::lround(decoders.at(i).filters * filter_scale)));
}

std::string UNetConfig::canonical() const {
  return "mode=" + to_string(mode) + ";enc=" + specs_to_string(encoders) +
         ";dec=" + specs_to_string(decoders) + ";slope=" + format_double(leaky_slope) +
         ";scale=" + format_double(filter_scale) + ";size=" + std::to_string(input_size) +
         ";bn_momentum=" + format_double(batch_norm.momentum) +
         ";bn_eps=" + format_double(batch_norm.eps);
}

UNetConfig UNetConfig::parse(const std::string& canonical) {
  UNetConfig cfg;
  std::stringstream ss(canonical);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ModelError("bad network config entry '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "mode") cfg.mode = parse_unet_mode(value);
    else if (key == "enc") cfg.encoders = parse_specs(value);
    else if (key == "dec") cfg.decoders = parse_specs(value);
    else if (key == "slope") cfg.leaky_slope = std::stod(value);
    else if (key == "scale") cfg.filter_scale = std::stod(value);
    else if (key == "size") cfg.input_size = std::stoi(value);
    else if (key == "bn_momentum") cfg.batch_norm.momentum = std::stod(value);
    else if (key == "bn_eps") cfg.batch_norm.eps = std::stod(value);
    else throw ModelError("unknown network config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

std::uint32_t UNetConfig::hash() const { return nn::crc32_of(canonical()); }

void UNetConfig::validate() const {
  if (encoders.empty() || encoders.size() != decoders.size()) {
    throw ContractViolation("network needs matching, non-empty encoder and decoder lists");
  }
  if (!(filter_scale > 0.0)) throw ContractViolation("filter scale must be positive");
  if (input_size <= 0 || input_size % (1 << encoders.size()) != 0) {
    throw ContractViolation("input size must be divisible by 2^blocks");
  }
  for (const auto* list : {&encoders, &decoders}) {
    for (const auto& s : *list) {
      if (s.kernel < 1 || s.filters < 1) throw ContractViolation("kernel and filters must be >= 1");
    }
  }
}

std::size_t unet_parameter_count(const UNetConfig& cfg) {
  cfg.validate();
  const std::size_t blocks = cfg.encoders.size();
  // Each block: k*k*cin*cout weights plus bias, gamma and beta per filter.
  auto block = [](std::size_t k, std::size_t cin, std::size_t cout) {
    return k * k * cin * cout + 3 * cout;
  };
  std::size_t total = 0;
  std::vector<std::size_t> enc_in(blocks);
  std::size_t cin = 1;
  for (std::size_t i = 0; i < blocks; ++i) {
    enc_in[i] = cin;
    const auto cout = static_cast<std::size_t>(cfg.encoder_filters(i));
    total += block(static_cast<std::size_t>(cfg.encoders[i].kernel), cin, cout);
    cin = cout;
  }
  for (std::size_t j = 0; j < blocks; ++j) {
    const std::size_t in = cin + enc_in[blocks - 1 - j];
    const auto cout = static_cast<std::size_t>(cfg.decoder_filters(j));
    total += block(static_cast<std::size_t>(cfg.decoders[j].kernel), in, cout);
    cin = cout;
  }
  return total + cin + 1;
}

UNet::UNet(UNetConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build();
  nn::init_he_uniform(params_, init_seed);
}

void UNet::build() {
  const std::size_t blocks = cfg_.encoders.size();
  std::vector<int> enc_in(blocks);
  int cin = 1;
  for (std::size_t i = 0; i < blocks; ++i) {
    enc_in[i] = cin;
    const int cout = cfg_.encoder_filters(i);
    add_conv_block(params_, encoder_name(i), cin, cout, cfg_.encoders[i].kernel);
    cin = cout;
  }
  for (std::size_t j = 0; j < blocks; ++j) {
    const int cout = cfg_.decoder_filters(j);
    add_conv_block(params_, decoder_name(j, blocks), cin + enc_in[blocks - 1 - j], cout,
                   cfg_.decoders[j].kernel);
    cin = cout;
  }
  params_.add("out.weight", Shape{1, cin, 1, 1}, true);
  params_.add("out.bias", Shape{1, 1, 1, 1}, true);
}

Tensor UNet::forward(const Tensor& input, const Tensor* mask, bool training,
                     UNetTape* tape) const {
  const int s = cfg_.input_size;
  if (input.shape.c != 1 || input.shape.h != s || input.shape.w != s) {
    throw ContractViolation("network input must be [n,1," + std::to_string(s) + "," +
                            std::to_string(s) + "], got " + nn::to_string(input.shape));
  }
  const bool informed = cfg_.mode == UNetMode::Informed;
  if (informed && mask == nullptr) {
    throw ContractViolation("informed network requires a validity mask");
  }
  if (training && tape == nullptr) throw ContractViolation("training forward needs a tape");

  const std::size_t blocks = cfg_.encoders.size();
  UNetTape local;
  local.training = training;
  local.encoders.resize(blocks);
  local.decoders.resize(blocks);

  auto run_block = [&](UNetTape::Block& b, const std::string& name, int stride, double slope) {
    const Tensor& w = params_.get(name + ".weight");
    const Tensor& bias = params_.get(name + ".bias");
    if (informed) {
      b.conv = nn::partial_conv2d(b.input, b.mask, w, bias, stride);
    } else {
      b.conv.y = nn::conv2d(b.input, w, bias, stride);
    }
    const Tensor& gamma = params_.get(name + ".gamma");
    const Tensor& beta = params_.get(name + ".beta");
    b.normalized = training
                       ? nn::batch_norm_train(b.conv.y, gamma, beta, cfg_.batch_norm, b.bn)
                       : nn::batch_norm_eval(b.conv.y, gamma, beta,
                                             params_.get(name + ".running_mean"),
                                             params_.get(name + ".running_var"), cfg_.batch_norm);
    return nn::leaky_relu(b.normalized, slope);
  };

  Tensor x = input;
  Tensor m = informed ? *mask : Tensor();
  if (informed && !(m.shape == input.shape)) {
    throw ContractViolation("mask shape " + nn::to_string(m.shape) + " differs from input");
  }
  for (std::size_t i = 0; i < blocks; ++i) {
    auto& b = local.encoders[i];
    b.input = std::move(x);
    b.mask = std::move(m);
    x = run_block(b, encoder_name(i), 2, 0.0);
    m = b.conv.mask;
  }
  for (std::size_t j = 0; j < blocks; ++j) {
    const auto& skip = local.encoders[blocks - 1 - j];
    auto& b = local.decoders[j];
    b.input = nn::concat_channels(nn::upsample2(x), skip.input);
    if (informed) b.mask = nn::mask_union(nn::upsample2(m), skip.mask);
    local.skip_channels.push_back(skip.input.shape.c);
    x = run_block(b, decoder_name(j, blocks), 1, cfg_.leaky_slope);
    m = b.conv.mask;
  }
  Tensor out = nn::conv2d(x, params_.get("out.weight"), params_.get("out.bias"), 1);
  local.head_input = std::move(x);
  if (tape != nullptr) *tape = std::move(local);
  return out;
}

nn::Grads UNet::backward(const UNetTape& tape, const Tensor& dout) const {
  if (!tape.training) throw ContractViolation("backward needs a training-mode tape");
  const bool informed = cfg_.mode == UNetMode::Informed;
  const std::size_t blocks = cfg_.encoders.size();
  nn::Grads grads = nn::zero_grads(params_);

  auto head = nn::conv2d_backward(tape.head_input, params_.get("out.weight"), 1, dout, true);
  grads["out.weight"] = std::move(head.dweight);
  grads["out.bias"] = std::move(head.dbias);

  auto block_backward = [&](const UNetTape::Block& b, const std::string& name, int stride,
                            double slope, const Tensor& dact, bool need_dx) {
    const Tensor dnorm = nn::leaky_relu_backward(b.normalized, dact, slope);
    auto bn = nn::batch_norm_backward(b.bn, params_.get(name + ".gamma"), dnorm);
    grads[name + ".gamma"] = std::move(bn.dgamma);
    grads[name + ".beta"] = std::move(bn.dbeta);
    const Tensor& w = params_.get(name + ".weight");
    auto g = informed ? nn::partial_conv2d_backward(b.input, b.mask, w, stride, b.conv, bn.dx, need_dx)
                      : nn::conv2d_backward(b.input, w, stride, bn.dx, need_dx);
    grads[name + ".weight"] = std::move(g.dweight);
    grads[name + ".bias"] = std::move(g.dbias);
    return std::move(g.dx);
  };

  std::vector<Tensor> dskip(blocks);
  Tensor d = std::move(head.dx);
  for (std::size_t jj = blocks; jj-- > 0;) {
    const auto& b = tape.decoders[jj];
    Tensor dcat = block_backward(b, decoder_name(jj, blocks), 1, cfg_.leaky_slope, d, true);
    Tensor dup, dsk;
    nn::split_channels(dcat, dcat.shape.c - tape.skip_channels[jj], dup, dsk);
    dskip[blocks - 1 - jj] = std::move(dsk);
    d = nn::upsample2_backward(dup);
  }
  for (std::size_t i = blocks; i-- > 0;) {
    Tensor dx = block_backward(tape.encoders[i], encoder_name(i), 2, 0.0, d, i > 0);
    if (i == 0) break;
    for (std::size_t k = 0; k < dx.data.size(); ++k) dx.data[k] += dskip[i].data[k];
    d = std::move(dx);
  }
  return grads;
}

void UNet::commit_batch_stats(const UNetTape& tape) {
  if (!tape.training) return;
  const std::size_t blocks = cfg_.encoders.size();
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::string e = encoder_name(i), d = decoder_name(i, blocks);
    nn::update_running_stats(tape.encoders[i].bn, cfg_.batch_norm, params_.get(e + ".running_mean"),
                             params_.get(e + ".running_var"));
    nn::update_running_stats(tape.decoders[i].bn, cfg_.batch_norm, params_.get(d + ".running_mean"),
                             params_.get(d + ".running_var"));
  }
}

void UNet::save(const std::filesystem::path& path,
                const std::map<std::string, std::string>& meta) const {
  nn::Checkpoint ckpt;
  ckpt.kind = "unet";
  ckpt.config_hash = cfg_.hash();
  ckpt.meta = meta;
  ckpt.meta["config"] = cfg_.canonical();
  ckpt.tensors = params_.tensors();
  nn::save_checkpoint(path, ckpt);
}

UNet UNet::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (ckpt.kind != "unet") {
    throw ModelError(path.string() + " holds a '" + ckpt.kind + "' checkpoint, not a network");
  }
  const auto it = ckpt.meta.find("config");
  if (it == ckpt.meta.end()) throw ModelError(path.string() + ": network config missing");
  UNetConfig cfg = UNetConfig::parse(it->second);
  if (cfg.hash() != ckpt.config_hash) {
    throw ModelError(path.string() + ": stored config does not match its hash");
  }
  UNet net(cfg);
  net.params_.assign(ckpt.tensors);
  return net;
}

UNet UNet::load(const std::filesystem::path& path, const UNetConfig& expected) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (ckpt.config_hash != expected.hash()) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "config hash %08x does not match expected %08x",
                  ckpt.config_hash, expected.hash());
    throw ModelError(path.string() + ": " + buf);
  }
  return load(path);
}

LogMagnitude inpaint(const UNet& net, const LogMagnitude& input, const ValidMap* valid) {
  if (!input.normalized) throw ContractViolation("inpaint: input must be normalized");
  const TfMatrix item = input.values;
  const Tensor x = nn::stack(std::span<const TfMatrix>(&item, 1));
  Tensor mask;
  if (valid != nullptr) mask = nn::mask_tensor(std::span<const ValidMap>(valid, 1));
  const Tensor y = net.forward(x, valid != nullptr ? &mask : nullptr, false);
  return LogMagnitude{nn::unstack(y, 0), true};
}

}  // namespace sinpaint
