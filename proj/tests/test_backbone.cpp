/* Copyright 2026 The htr3d Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <doctest.h>

#include "htr/autodiff.hpp"
#include "htr/backbone.hpp"
#include "htr/gradcheck.hpp"

using namespace htr;

namespace {

BackboneConfig small_config() {
  BackboneConfig c;
  c.input_height = 16;
  c.stages = parse_stages("4:3:1:pool,6:3:1:pool,8:3:1");
  return c;
}

Tensor random_image(std::size_t w, std::size_t h, Rng& rng) {
  Tensor t({1, w, h});
  for (double& v : t.mutable_values()) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("stage strings round trip") {
  const auto stages = parse_stages("32:3:1:pool,64:5:2");
  REQUIRE(stages.size() == 2);
  CHECK(stages[0].pool);
  CHECK(stages[1].kernel == 5);
  CHECK(stages[1].stride == 2);
  CHECK(format_stages(stages) == "32:3:1:pool,64:5:2");
  CHECK_THROWS(parse_stages("32:3"));
  CHECK_THROWS(parse_stages("32:3:1:max"));
}

TEST_CASE("default backbone downsamples by eight") {
  BackboneConfig c;
  CHECK(c.channels() == 128);
  CHECK(backbone_output_height(c) == 8);
  CHECK(backbone_output_width(c, 256) == 32);
}

TEST_CASE("output width table is deterministic and monotone") {
  const BackboneConfig c = small_config();
  std::size_t prev = 0;
  for (std::size_t w = 4; w <= 64; ++w) {
    const std::size_t out = backbone_output_width(c, w);
    CHECK(out == w / 2 / 2);
    CHECK(out >= prev);
    prev = out;
  }
  CHECK_THROWS_AS(backbone_output_width(c, 3), std::invalid_argument);
}

TEST_CASE("invalid configs are rejected") {
  BackboneConfig c = small_config();
  c.input_height = 2;
  CHECK_THROWS(c.validate());
  c = small_config();
  c.stages[0].out_channels = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("backbone forward shapes and errors") {
  Rng rng(1);
  const BackboneConfig c = small_config();
  ParameterStore params;
  BufferStore buffers;
  init_backbone(c, params, buffers, rng);
  FeatureVolume v = backbone_forward(random_image(24, 16, rng), c, params, buffers, Mode::eval);
  CHECK(v.data.shape() == ad::Shape{8, 6, 4});
  CHECK(v.downsample_width == 4.0);
  CHECK_THROWS_AS(backbone_forward(random_image(24, 15, rng), c, params, buffers, Mode::eval),
                  std::invalid_argument);
  CHECK_THROWS_AS(backbone_forward(random_image(3, 16, rng), c, params, buffers, Mode::eval),
                  std::invalid_argument);
}

TEST_CASE("doubling the input width doubles the output width") {
  Rng rng(2);
  const BackboneConfig c = small_config();
  ParameterStore params;
  BufferStore buffers;
  init_backbone(c, params, buffers, rng);
  const auto a = backbone_forward(random_image(20, 16, rng), c, params, buffers, Mode::eval);
  const auto b = backbone_forward(random_image(40, 16, rng), c, params, buffers, Mode::eval);
  CHECK(b.data.dim(1) == 2 * a.data.dim(1));
}

TEST_CASE("zero image gives the batch-norm shift in every position") {
  Rng rng(3);
  BackboneConfig c = small_config();
  c.stages = parse_stages("4:3:1");
  ParameterStore params;
  BufferStore buffers;
  init_backbone(c, params, buffers, rng);
  auto beta = params.at("backbone.stage0.bn.beta").mutable_values();
  for (std::size_t i = 0; i < beta.size(); ++i) beta[i] = 0.1 * static_cast<double>(i + 1);
  Tensor zero({1, 8, 16}, 0.0);
  const auto v = backbone_forward(zero, c, params, buffers, Mode::train);
  for (std::size_t ch = 0; ch < 4; ++ch) {
    for (std::size_t p = 0; p < 8 * 16; ++p) CHECK(v.data[ch * 128 + p] == doctest::Approx(beta[ch]));
  }
}

TEST_CASE("batchnorm2d train and eval modes") {
  Rng rng(4);
  Tensor x({2, 4, 3});
  for (double& v : x.mutable_values()) v = rng.uniform(2, 6);
  Tensor gamma({2}, 1.0), beta({2}, 0.0), mean({2}, 0.0), var({2}, 1.0);

  Tensor id = batchnorm2d(x, gamma, beta, mean, var, Mode::eval, 0.9, 1e-5);
  CHECK(id[5] == doctest::Approx(x[5] / std::sqrt(1 + 1e-5)));
  CHECK(mean[0] == 0.0);

  Tensor y = batchnorm2d(x, gamma, beta, mean, var, Mode::train, 0.9, 1e-5);
  double m0 = 0;
  for (std::size_t i = 0; i < 12; ++i) m0 += x[i] / 12;
  CHECK(mean[0] == doctest::Approx(0.1 * m0));
  double ym = 0;
  for (std::size_t i = 0; i < 12; ++i) ym += y[i] / 12;
  CHECK(std::abs(ym) < 1e-12);
  // Shifted input: train mode renormalizes, eval mode does not.
  Tensor shifted = ad::add(x, Tensor::scalar(10.0));
  Tensor t = batchnorm2d(shifted, gamma, beta, mean, var, Mode::train, 0.9, 1e-5);
  Tensor e = batchnorm2d(shifted, gamma, beta, mean, var, Mode::eval, 0.9, 1e-5);
  CHECK(std::abs(t[0] - e[0]) > 1.0);

  Tensor constant({1, 3, 3}, 4.0), g1({1}, 1.0), b1({1}, 0.0), m1({1}, 0.0), v1({1}, 1.0);
  Tensor z = batchnorm2d(constant, g1, b1, m1, v1, Mode::train, 0.9, 1e-5);
  for (double v : z.values()) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("every backbone weight receives gradient") {
  Rng rng(5);
  const BackboneConfig c = small_config();
  ParameterStore params;
  BufferStore buffers;
  init_backbone(c, params, buffers, rng);
  Tensor img = random_image(16, 16, rng);
  ad::Tape tape;
  const auto v = backbone_forward(img, c, params, buffers, Mode::train);
  Tensor probe(v.data.shape());
  for (double& p : probe.mutable_values()) p = rng.uniform(-1, 1);
  tape.backward(ad::sum(ad::mul(v.data, probe)));
  for (auto& [name, t] : params) {
    if (name.ends_with("conv.b")) continue;
    bool any = false;
    for (double g : t.grad()) any = any || g != 0.0;
    CHECK_MESSAGE(any, name);
  }
}

TEST_CASE("gradcheck through a conv and batch-norm stage") {
  Rng rng(6);
  BackboneConfig c = small_config();
  c.input_height = 5;
  c.stages = parse_stages("3:3:1");
  ParameterStore params;
  BufferStore buffers;
  init_backbone(c, params, buffers, rng);
  Tensor img = random_image(4, 5, rng).set_requires_grad();
  Tensor probe({3, 4, 5});
  for (double& p : probe.mutable_values()) p = rng.uniform(-1, 1);
  std::vector<Tensor> wrt = {img};
  for (auto& [name, t] : params) wrt.push_back(t);
  auto f = [&]() {
    const auto v = backbone_forward(img, c, params, buffers, Mode::train);
    return ad::sum(ad::mul(v.data, probe));
  };
  CHECK(ad::gradcheck(f, wrt) < 1e-5);
}
