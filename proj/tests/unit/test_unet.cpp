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

#include <random>

#include "sinpaint/error.hpp"
#include "sinpaint/unet.hpp"
#include "grad_check.hpp"
#include "test_support.hpp"

using namespace sinpaint;
using nn::Shape;
using nn::Tensor;

namespace {

UNetConfig toy_config(UNetMode mode) {
  UNetConfig cfg;
  cfg.mode = mode;
  cfg.encoders = {{3, 3}, {3, 4}};
  cfg.decoders = {{3, 3}, {3, 2}};
  cfg.input_size = 8;
  return cfg;
}

Tensor hole_mask(int n, int s) {
  Tensor m(Shape{n, 1, s, s}, 1.0);
  for (int b = 0; b < n; ++b)
    for (int y = 0; y < s; ++y)
      for (int x = 2 + b; x < 4 + b; ++x) m.at(b, 0, y, x) = 0.0;
  return m;
}

}  // namespace

TEST_CASE("default network size", "[unet]") {
  const UNetConfig cfg;
  // Per block: k*k*cin*cout weights plus bias, gamma and beta.
  const std::size_t expected =
      (49 * 1 * 16 + 3 * 16) + (25 * 16 * 32 + 3 * 32) + (25 * 32 * 64 + 3 * 64) +
      (9 * 64 * 128 + 3 * 128) + (9 * 128 * 128 + 3 * 128) + (9 * 128 * 128 + 3 * 128) +
      (9 * 256 * 128 + 3 * 128) + (9 * 256 * 128 + 3 * 128) + (9 * 192 * 64 + 3 * 64) +
      (9 * 96 * 32 + 3 * 32) + (9 * 48 * 16 + 3 * 16) + (9 * 17 * 1 + 3 * 1) + (1 + 1);
  CHECK(unet_parameter_count(cfg) == expected);
  const UNet net(cfg);
  CHECK(net.params().trainable_count() == expected);
}

TEST_CASE("filter scale shrinks every layer", "[unet]") {
  UNetConfig cfg;
  cfg.filter_scale = 0.25;
  CHECK(cfg.encoder_filters(0) == 4);
  CHECK(cfg.decoder_filters(5) == 1);
  const UNet net(cfg);
  CHECK(net.params().trainable_count() == unet_parameter_count(cfg));
  CHECK(unet_parameter_count(cfg) < unet_parameter_count(UNetConfig{}) / 10);
}

TEST_CASE("full-size forward pass keeps the spectrogram shape", "[unet]") {
  UNetConfig cfg;
  cfg.filter_scale = 0.25;
  const UNet net(cfg, 3);
  std::mt19937_64 rng(1);
  const Tensor x = testing::random_tensor({1, 1, 128, 128}, rng);
  const Tensor m = hole_mask(1, 128);
  const Tensor y = net.forward(x, &m, false);
  CHECK(y.shape == x.shape);
  CHECK(y.all_finite());
  CHECK_THROWS_AS(net.forward(x, nullptr, false), ContractViolation);
  CHECK_THROWS_AS(net.forward(testing::random_tensor({1, 1, 64, 64}, rng), &m, false), ContractViolation);
  CHECK_THROWS_AS(net.forward(x, &m, true), ContractViolation);
}

TEST_CASE("blind mode needs no mask", "[unet]") {
  const UNet net(toy_config(UNetMode::Blind), 2);
  std::mt19937_64 rng(2);
  const Tensor x = testing::random_tensor({2, 1, 8, 8}, rng);
  const Tensor a = net.forward(x, nullptr, false);
  const Tensor m = hole_mask(2, 8);
  CHECK(net.forward(x, &m, false) == a);
}

TEST_CASE("network gradients match finite differences", "[unet][grad]") {
  for (auto mode : {UNetMode::Informed, UNetMode::Blind}) {
    UNet net(toy_config(mode), 5);
    std::mt19937_64 rng(6);
    const Tensor x = testing::random_tensor({2, 1, 8, 8}, rng);
    const Tensor m = hole_mask(2, 8);
    const Tensor* mp = mode == UNetMode::Informed ? &m : nullptr;
    UNetTape tape;
    const Tensor y = net.forward(x, mp, true, &tape);
    const Tensor r = testing::random_tensor(y.shape, rng);
    const auto grads = net.backward(tape, r);
    auto loss = [&] {
      UNetTape t;
      return testing::dot(net.forward(x, mp, true, &t), r);
    };
    std::uniform_int_distribution<std::size_t> pick;
    for (const auto& name : net.params().trainable_names()) {
      Tensor& p = net.params().get(name);
      // Up to eight sampled entries per tensor.
      std::vector<std::size_t> idx;
      for (int k = 0; k < 8; ++k) idx.push_back(pick(rng) % p.size());
      INFO(to_string(mode) << " " << name);
      testing::check_gradient(p, grads.at(name), loss, 1e-3, idx);
    }
  }
}

TEST_CASE("batch statistics feed the running averages", "[unet]") {
  UNet net(toy_config(UNetMode::Informed), 1);
  std::mt19937_64 rng(3);
  const Tensor x = testing::random_tensor({4, 1, 8, 8}, rng, 3.0);
  const Tensor m = hole_mask(4, 8);
  const Tensor before = net.params().get("enc1.running_mean");
  UNetTape tape;
  net.forward(x, &m, true, &tape);
  net.commit_batch_stats(tape);
  CHECK_FALSE(net.params().get("enc1.running_mean") == before);
}

TEST_CASE("config text round trips and drives the hash", "[unet]") {
  UNetConfig cfg;
  cfg.filter_scale = 0.5;
  cfg.mode = UNetMode::Blind;
  const UNetConfig back = UNetConfig::parse(cfg.canonical());
  CHECK(back.canonical() == cfg.canonical());
  CHECK(back.hash() == cfg.hash());
  UNetConfig other = cfg;
  other.filter_scale = 0.25;
  CHECK(other.hash() != cfg.hash());
  CHECK_THROWS_AS(UNetConfig::parse("mode=informed;colour=blue"), ModelError);

  UNetConfig bad;
  bad.decoders.pop_back();
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = UNetConfig{};
  bad.input_size = 100;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("saved networks reload bit-identically", "[unet][checkpoint]") {
  testing::ScratchDir dir("unet");
  const UNet net(toy_config(UNetMode::Informed), 9);
  net.save(dir / "net.ckpt", {{"epoch", "2"}});
  const UNet back = UNet::load(dir / "net.ckpt");
  CHECK(back.config().canonical() == net.config().canonical());
  CHECK(back.params().tensors() == net.params().tensors());

  std::mt19937_64 rng(4);
  const Tensor x = testing::random_tensor({1, 1, 8, 8}, rng);
  const Tensor m = hole_mask(1, 8);
  CHECK(back.forward(x, &m, false) == net.forward(x, &m, false));

  CHECK_NOTHROW(UNet::load(dir / "net.ckpt", net.config()));
  CHECK_THROWS_AS(UNet::load(dir / "net.ckpt", toy_config(UNetMode::Blind)), ModelError);

  nn::Checkpoint other;
  other.kind = "speechvgg";
  nn::save_checkpoint(dir / "other.ckpt", other);
  CHECK_THROWS_AS(UNet::load(dir / "other.ckpt"), ModelError);
}

TEST_CASE("initialization depends only on the seed", "[unet]") {
  const UNet a(toy_config(UNetMode::Informed), 11), b(toy_config(UNetMode::Informed), 11),
      c(toy_config(UNetMode::Informed), 12);
  CHECK(a.params().tensors() == b.params().tensors());
  CHECK_FALSE(a.params().get("enc1.weight") == c.params().get("enc1.weight"));
}

TEST_CASE("single-segment inpaint wrapper", "[unet]") {
  UNetConfig cfg;
  cfg.filter_scale = 0.125;
  const UNet net(cfg, 1);
  LogMagnitude in{TfMatrix::Random(kNumBins, kNumFrames), true};
  ValidMap valid = ValidMap::Constant(kNumBins, kNumFrames, true);
  valid.middleCols(30, 10).setConstant(false);
  const auto out = inpaint(net, in, &valid);
  CHECK(out.normalized);
  CHECK(out.values.rows() == kNumBins);
  CHECK(out.values.allFinite());
  LogMagnitude raw = in;
  raw.normalized = false;
  CHECK_THROWS_AS(inpaint(net, raw, &valid), ContractViolation);
}
