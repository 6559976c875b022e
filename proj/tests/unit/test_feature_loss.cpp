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
#include "sinpaint/feature_loss.hpp"
#include "grad_check.hpp"
#include "test_support.hpp"

using namespace sinpaint;
using nn::Shape;
using nn::Tensor;

namespace {

SpeechVGGConfig toy_vgg() {
  SpeechVGGConfig cfg;
  cfg.block_convs = {1, 2};
  cfg.block_channels = {3, 4};
  cfg.hidden = 6;
  cfg.classes = 3;
  cfg.input_size = 8;
  return cfg;
}

// Mean of |a - b| over every element, written out directly.
double mean_abs_oracle(std::span<const double> a, std::span<const double> b) {
  long double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(static_cast<long double>(a[i]) - b[i]);
  return static_cast<double>(s / a.size());
}

}  // namespace

TEST_CASE("deep feature loss of a signal with itself is exactly zero", "[loss]") {
  std::mt19937_64 rng(1);
  SpeechVGGConfig cfg;
  cfg.width_scale = 0.125;
  cfg.hidden = 16;
  const SpeechVGG vgg(cfg, 3);
  const Tensor y = testing::random_tensor({2, 1, 128, 128}, rng);
  CHECK(deep_feature_loss(y, y, vgg) == 0.0);
  const Tensor other = testing::random_tensor({2, 1, 128, 128}, rng);
  CHECK(deep_feature_loss(y, other, vgg) > 0.0);

  LogMagnitude a{TfMatrix::Random(kNumBins, kNumFrames), true};
  CHECK(deep_feature_loss(a, a, vgg) == 0.0);
  LogMagnitude raw = a;
  raw.normalized = false;
  CHECK_THROWS_AS(deep_feature_loss(raw, raw, vgg), ContractViolation);
}

TEST_CASE("pixel loss is the mean absolute difference", "[loss]") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = testing::random_tensor({3, 1, 16, 12}, rng, 1.0 + trial);
    const Tensor b = testing::random_tensor({3, 1, 16, 12}, rng);
    CHECK(pixel_loss(a, b) == Catch::Approx(mean_abs_oracle(a.data, b.data)).epsilon(1e-6));
  }
  const TfMatrix x = TfMatrix::Random(kNumBins, kNumFrames), y = TfMatrix::Random(kNumBins, kNumFrames);
  const std::vector<double> xv(x.data(), x.data() + x.size()), yv(y.data(), y.data() + y.size());
  CHECK(pixel_loss(x, y) == Catch::Approx(mean_abs_oracle(xv, yv)).epsilon(1e-6));
  CHECK(pixel_loss(x, x) == 0.0);
  CHECK_THROWS_AS(pixel_loss(x, TfMatrix::Random(4, 4)), ContractViolation);
}

TEST_CASE("identity extractor turns the feature loss into the pixel loss", "[loss]") {
  std::mt19937_64 rng(3);
  const Tensor a = testing::random_tensor({2, 1, 8, 8}, rng);
  const Tensor b = testing::random_tensor({2, 1, 8, 8}, rng);
  const IdentityExtractor id;
  CHECK(deep_feature_loss(a, b, id) == pixel_loss(a, b));
  std::unique_ptr<FeatureExtractor::Tape> tape;
  const auto taps = id.taps(a, &tape);
  const auto lg = deep_feature_loss_grad(taps, b, id);
  const auto pg = pixel_loss_grad(a, b);
  CHECK(lg.loss == pg.loss);
  CHECK(lg.grad == pg.grad);
}

TEST_CASE("feature loss gradient matches finite differences", "[loss][grad]") {
  std::mt19937_64 rng(4);
  const SpeechVGG vgg(toy_vgg(), 5);
  const Tensor y = testing::random_tensor({2, 1, 8, 8}, rng);
  Tensor y_hat = testing::random_tensor({2, 1, 8, 8}, rng);
  std::unique_ptr<FeatureExtractor::Tape> tape;
  const auto target = vgg.taps(y, &tape);
  const auto lg = deep_feature_loss_grad(target, y_hat, vgg);
  CHECK(lg.loss == Catch::Approx(deep_feature_loss(y, y_hat, vgg)));
  testing::check_gradient(y_hat, lg.grad, [&] { return deep_feature_loss(y, y_hat, vgg); });
}

TEST_CASE("pixel loss gradient", "[loss][grad]") {
  std::mt19937_64 rng(5);
  const Tensor y = testing::random_tensor({2, 1, 4, 4}, rng);
  Tensor y_hat = testing::random_tensor({2, 1, 4, 4}, rng);
  const auto g = pixel_loss_grad(y, y_hat);
  testing::check_gradient(y_hat, g.grad, [&] { return pixel_loss(y, y_hat); });
}

TEST_CASE("classifier gradients match finite differences", "[loss][grad][vgg]") {
  std::mt19937_64 rng(6);
  SpeechVGG vgg(toy_vgg(), 7);
  const Tensor x = testing::random_tensor({3, 1, 8, 8}, rng);
  const std::vector<int> labels{2, 0, 1};
  std::unique_ptr<FeatureExtractor::Tape> tape;
  const Tensor z = vgg.logits(x, &tape);
  CHECK(z.shape == Shape{3, 3, 1, 1});
  const auto ce = nn::softmax_cross_entropy(z, labels);
  const auto grads = vgg.logits_backward(*tape, ce.dlogits);
  auto loss = [&] { return nn::softmax_cross_entropy(vgg.logits(x, nullptr), labels).loss; };
  std::uniform_int_distribution<std::size_t> pick;
  for (const auto& name : vgg.params().trainable_names()) {
    Tensor& p = vgg.params().get(name);
    std::vector<std::size_t> idx;
    for (int k = 0; k < 8; ++k) idx.push_back(pick(rng) % p.size());
    INFO(name);
    testing::check_gradient(p, grads.at(name), loss, 1e-3, idx);
  }
}

TEST_CASE("extractor taps are the pooling outputs", "[vgg]") {
  SpeechVGGConfig cfg;
  cfg.width_scale = 0.0625;
  cfg.hidden = 8;
  const SpeechVGG vgg(cfg);
  std::mt19937_64 rng(7);
  const auto taps = vgg.taps(testing::random_tensor({1, 1, 128, 128}, rng), nullptr);
  REQUIRE(taps.size() == 5);
  CHECK(taps[0].shape == Shape{1, 4, 64, 64});
  CHECK(taps[4].shape == Shape{1, 32, 4, 4});
}

TEST_CASE("argmax ties go to the lowest index", "[vgg]") {
  const std::vector<double> v{0.1, 0.7, 0.7, 0.2};
  CHECK(argmax_lowest(v) == 1);
  CHECK_THROWS_AS(argmax_lowest({}), ContractViolation);
}

TEST_CASE("extractor checkpoints keep the vocabulary", "[vgg][checkpoint]") {
  testing::ScratchDir dir("vgg");
  SpeechVGG vgg(toy_vgg(), 8);
  vgg.attach_vocabulary(Vocabulary({"alpha", "bravo", "charlie"}));
  CHECK_THROWS_AS(vgg.attach_vocabulary(Vocabulary({"alpha"})), ModelError);
  vgg.save(dir / "vgg.ckpt");
  const SpeechVGG back = SpeechVGG::load(dir / "vgg.ckpt");
  CHECK(back.vocabulary().words() == vgg.vocabulary().words());
  CHECK(back.params().tensors() == vgg.params().tensors());
  std::mt19937_64 rng(9);
  const Tensor x = testing::random_tensor({2, 1, 8, 8}, rng);
  CHECK(back.classify(x) == vgg.classify(x));
  CHECK(SpeechVGGConfig::parse(toy_vgg().canonical()).hash() == toy_vgg().hash());
}
