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

#include <string>
#include <vector>

#include "htr/adam.hpp"
#include "htr/attention3d.hpp"
#include "htr/backbone.hpp"
#include "htr/context.hpp"
#include "htr/ctc.hpp"
#include "htr/decoder.hpp"
#include "htr/framing.hpp"
#include "htr/vocabulary.hpp"

namespace htr {

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t ffn_dim = 128;
  std::size_t agg_dim = 64;
  std::size_t lstm_hidden = 0;  // 0 selects the channel width C
  std::vector<int> scales = {2, 3, 4};
  int infer_scale = 3;
  bool use_3d_attention = true;
  bool use_context = true;
  bool global_sublayer = true;
  bool sum_normalized_weights = false;
  double ln_eps = 1e-5;
  std::size_t decoder_attn_dim = 64;
  std::size_t decoder_hidden = 64;
  std::size_t decoder_embed = 32;
  bool share_decoder = false;

  std::size_t channels() const { return static_cast<std::size_t>(backbone.channels()); }
  std::size_t hidden() const { return lstm_hidden == 0 ? channels() : lstm_hidden; }
  // Width of v_t.
  std::size_t feature_dim() const {
    return use_context ? 2 * channels() + hidden() : channels();
  }
  double scale_s() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Everything needed to resume training or run inference: the shared
// backbone, one branch per frame length, optional decoders, batch-norm
// statistics and optimizer state.
struct ModelBundle {
  ModelConfig config;
  Vocabulary vocab;
  ParameterStore params;
  BufferStore buffers;
  AdamState adam;
  std::size_t epochs_completed = 0;

  bool has_branch(int scale) const;
  bool has_decoder(int scale) const;
};

std::string branch_prefix(int scale);
std::string decoder_prefix(const ModelConfig& config, int scale);

ModelBundle create_bundle(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed);
// Adds randomly initialized decoder parameters for every branch lacking one.
void init_decoders(ModelBundle& bundle, std::uint64_t seed);
// Drops every branch (and its decoder) whose frame length is not in `keep`.
void prune_branches(ModelBundle& bundle, const std::vector<int>& keep);

const PositionalTable& positional_table(std::size_t channels);

struct BranchOutput {
  int scale = 0;
  VisualSequence visual;
  IntegratedSequence features;
  Tensor logits;  // [T x classes]
};

struct TrainForward {
  FeatureVolume volume;
  std::vector<BranchOutput> branches;
};

// One backbone pass shared by all branches, then per frame length: framing
// -> 3D attention -> global/local context -> classifier.
TrainForward forward_train(const Tensor& image, ModelBundle& bundle, Mode mode = Mode::train);
BranchOutput forward_branch(const FeatureVolume& volume, const ModelBundle& bundle, int scale);

// Eval-mode logits of the inference branch; throws when it is missing.
Tensor infer_logits(const Tensor& image, ModelBundle& bundle);
LabelSequence forward_infer(const Tensor& image, ModelBundle& bundle);

}  // namespace htr
