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
#include "htr/backbone.hpp"

#include <sstream>
#include <stdexcept>

namespace htr {

namespace {

std::string stage_prefix(std::size_t i) { return "backbone.stage" + std::to_string(i) + "."; }

std::size_t conv_extent(std::size_t n, const ConvStage& s) {
  const std::size_t k = static_cast<std::size_t>(s.kernel);
  const std::size_t pad = k / 2;
  if (n + 2 * pad < k) return 0;
  return (n + 2 * pad - k) / static_cast<std::size_t>(s.stride) + 1;
}

}  // namespace

void BackboneConfig::validate() const {
  if (input_height <= 0 || input_channels <= 0) {
    throw std::invalid_argument("backbone: input height and channels must be positive");
  }
  if (stages.empty()) throw std::invalid_argument("backbone: at least one stage is required");
  for (const ConvStage& s : stages) {
    if (s.out_channels <= 0 || s.kernel <= 0 || s.stride <= 0) {
      throw std::invalid_argument("backbone: stage dimensions must be positive");
    }
  }
  if (bn_momentum < 0 || bn_momentum > 1 || bn_eps <= 0) {
    throw std::invalid_argument("backbone: bad batch-norm momentum/eps");
  }
  if (backbone_output_height(*this) < 1) {
    throw std::invalid_argument("backbone: feature height collapses to zero for input height " +
                                std::to_string(input_height));
  }
}

std::vector<ConvStage> parse_stages(const std::string& text) {
  std::vector<ConvStage> out;
  std::stringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) {
    std::stringstream fields(item);
    std::string f;
    std::vector<std::string> parts;
    while (std::getline(fields, f, ':')) parts.push_back(f);
    if (parts.size() < 3 || parts.size() > 4 || (parts.size() == 4 && parts[3] != "pool")) {
      throw std::invalid_argument("bad backbone stage '" + item +
                                  "', expected channels:kernel:stride[:pool]");
    }
    ConvStage s;
    s.out_channels = std::stoi(parts[0]);
    s.kernel = std::stoi(parts[1]);
    s.stride = std::stoi(parts[2]);
    s.pool = parts.size() == 4;
    out.push_back(s);
  }
  return out;
}

std::string format_stages(const std::vector<ConvStage>& stages) {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const ConvStage& s = stages[i];
    if (i) out += ',';
    out += std::to_string(s.out_channels) + ':' + std::to_string(s.kernel) + ':' +
           std::to_string(s.stride);
    if (s.pool) out += ":pool";
  }
  return out;
}

void init_backbone(const BackboneConfig& config, ParameterStore& params,
                   BufferStore& buffers, Rng& rng) {
  config.validate();
  std::size_t in = static_cast<std::size_t>(config.input_channels);
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const ConvStage& s = config.stages[i];
    const std::size_t out = static_cast<std::size_t>(s.out_channels);
    const std::size_t k = static_cast<std::size_t>(s.kernel);
    const std::string p = stage_prefix(i);
    params.add(p + "conv.w", glorot_uniform({out, in, k, k}, rng));
    params.add(p + "conv.b", filled({out}, 0.0));
    params.add(p + "bn.gamma", filled({out}, 1.0));
    params.add(p + "bn.beta", filled({out}, 0.0));
    buffers[p + "bn.running_mean"] = filled({out}, 0.0);
    buffers[p + "bn.running_var"] = filled({out}, 1.0);
    in = out;
  }
}

std::size_t backbone_output_width(const BackboneConfig& config, std::size_t input_width) {
  std::size_t w = input_width;
  for (const ConvStage& s : config.stages) {
    w = conv_extent(w, s);
    if (s.pool) w /= 2;
    if (w == 0) {
      throw std::invalid_argument("image too narrow: width " + std::to_string(input_width) +
                                  " leaves no feature columns");
    }
  }
  return w;
}

std::size_t backbone_output_height(const BackboneConfig& config) {
  std::size_t h = static_cast<std::size_t>(config.input_height);
  for (const ConvStage& s : config.stages) {
    h = conv_extent(h, s);
    if (s.pool) h /= 2;
    if (h == 0) return 0;
  }
  return h;
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, Mode mode,
                   double momentum, double eps) {
  if (mode == Mode::eval) {
    ad::ChannelStats running{{running_mean.values().begin(), running_mean.values().end()},
                             {running_var.values().begin(), running_var.values().end()}};
    return ad::batch_norm2d(x, gamma, beta, eps, &running);
  }
  ad::ChannelStats batch;
  Tensor y = ad::batch_norm2d(x, gamma, beta, eps, nullptr, &batch);
  auto rm = running_mean.mutable_values();
  auto rv = running_var.mutable_values();
  for (std::size_t c = 0; c < rm.size(); ++c) {
    rm[c] = momentum * rm[c] + (1.0 - momentum) * batch.mean[c];
    rv[c] = momentum * rv[c] + (1.0 - momentum) * batch.var[c];
  }
  return y;
}

FeatureVolume backbone_forward(const Tensor& image, const BackboneConfig& config,
                               const ParameterStore& params, BufferStore& buffers, Mode mode) {
  if (image.rank() != 3 || image.dim(0) != static_cast<std::size_t>(config.input_channels)) {
    throw std::invalid_argument("backbone: expected image of shape [" +
                                std::to_string(config.input_channels) + " x W x H], got " +
                                ad::shape_str(image.shape()));
  }
  if (image.dim(2) != static_cast<std::size_t>(config.input_height)) {
    throw std::invalid_argument("backbone: image height " + std::to_string(image.dim(2)) +
                                " does not match configured height " +
                                std::to_string(config.input_height));
  }
  backbone_output_width(config, image.dim(1));

  Tensor x = image;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const ConvStage& s = config.stages[i];
    const std::string p = stage_prefix(i);
    x = ad::conv2d(x, params.at(p + "conv.w"), params.at(p + "conv.b"),
                   static_cast<std::size_t>(s.stride), static_cast<std::size_t>(s.kernel) / 2);
    x = batchnorm2d(x, params.at(p + "bn.gamma"), params.at(p + "bn.beta"),
                    buffers.at(p + "bn.running_mean"), buffers.at(p + "bn.running_var"), mode,
                    config.bn_momentum, config.bn_eps);
    x = ad::relu(x);
    if (s.pool) x = ad::max_pool2d(x, 2);
  }
  return FeatureVolume{x, static_cast<double>(image.dim(1)) / static_cast<double>(x.dim(1)),
                       static_cast<double>(image.dim(2)) / static_cast<double>(x.dim(2))};
}

}  // namespace htr
