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
#pragma once

#include <map>
#include <string>
#include <vector>

#include "htr/autodiff.hpp"
#include "htr/params.hpp"

namespace htr {

enum class Mode { train, eval };

struct ConvStage {
  int out_channels = 32;
  int kernel = 3;
  int stride = 1;
  bool pool = false;  // 2x2 max pooling after the activation

  bool operator==(const ConvStage&) const = default;
};

struct BackboneConfig {
  int input_height = 64;
  int input_channels = 1;
  std::vector<ConvStage> stages = {
      {32, 3, 1, true}, {64, 3, 1, true}, {128, 3, 1, true}, {128, 3, 1, false}, {128, 3, 1, false}};
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  int channels() const { return stages.empty() ? input_channels : stages.back().out_channels; }
  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

// "32:3:1:pool,64:3:1" style stage lists used in config files.
std::vector<ConvStage> parse_stages(const std::string& text);
std::string format_stages(const std::vector<ConvStage>& stages);

struct FeatureVolume {
  Tensor data;               // [C x W x H]
  double downsample_width;   // input width / W
  double downsample_height;  // input height / H
};

// Non-trainable per-model state (batch-norm running statistics).
using BufferStore = std::map<std::string, Tensor>;

void init_backbone(const BackboneConfig& config, ParameterStore& params,
                   BufferStore& buffers, Rng& rng);

// Feature width produced for an input of `input_width` pixels; throws when any
// stage would collapse the width to zero.
std::size_t backbone_output_width(const BackboneConfig& config, std::size_t input_width);
std::size_t backbone_output_height(const BackboneConfig& config);

// Batch norm over a [C x W x H] volume. In train mode the statistics of `x` are
// used and the running estimates are updated with momentum; eval mode uses
// the running estimates.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, Mode mode,
                   double momentum, double eps);

// image: [input_channels x W0 x H0] with H0 == config.input_height.
FeatureVolume backbone_forward(const Tensor& image, const BackboneConfig& config,
                               const ParameterStore& params, BufferStore& buffers, Mode mode);

}  // namespace htr
