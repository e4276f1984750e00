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

#include "htr/autodiff.hpp"
#include "htr/framing.hpp"
#include "htr/params.hpp"

namespace htr {

// LayerNorm followed by FC -> tanh -> FC, applied to every row independently.
struct SublayerParams {
  Tensor ln_gamma, ln_beta;  // [C]
  Tensor w1, b1;             // [F x C], [F]
  Tensor w2, b2;             // [C x F], [C]
};

struct Attention3DParams {
  SublayerParams sublayer;
  Tensor agg_W, agg_b;  // [A x C], [A]
  Tensor agg_w;         // [A]
  double scale_s = 1.0;
};

struct AttentionOptions {
  // Normalize aggregation scores by their plain sum instead of a softmax.
  bool sum_normalized_weights = false;
  double ln_eps = 1e-5;
};

void init_sublayer(ParameterStore& params, const std::string& prefix, std::size_t channels,
                   std::size_t ffn_dim, Rng& rng);
SublayerParams sublayer_params(const ParameterStore& params, const std::string& prefix);

void init_attention3d(ParameterStore& params, const std::string& prefix, std::size_t channels,
                      std::size_t ffn_dim, std::size_t agg_dim, Rng& rng);
Attention3DParams attention3d_params(const ParameterStore& params, const std::string& prefix,
                                     double scale_s);

// softmax(F F^T / s) F with queries, keys and values all equal to the rows of F.
Tensor self_attention(const Tensor& rows, double scale_s);
inline Tensor block_self_attention(const Tensor& rows, double scale_s) {
  return self_attention(rows, scale_s);
}

Tensor sublayer(const Tensor& rows, const SublayerParams& params, double ln_eps = 1e-5);

struct Aggregation {
  Tensor r;      // [C]
  Tensor alpha;  // [SH], one weight per plane location
};

// e_p = w . tanh(W f_p + b); alpha = softmax(e) (or e / sum(e) when literal);
// r = sum_p alpha_p f_p.
Aggregation aggregate(const Tensor& rows, const Attention3DParams& params,
                      bool sum_normalized_weights = false);

struct VisualSequence {
  std::vector<Tensor> features;  // T vectors of length C
  std::size_t frame_length = 0;
  std::size_t plane_height = 0;
  // Per-block aggregation weights in reshape order (row s*H + h).
  std::vector<std::vector<double>> alphas;
  std::size_t size() const { return features.size(); }
};

// Positional encoding -> reshape -> block self-attention -> sublayer ->
// aggregation, for every block.
VisualSequence forward_3d_attention(const BlockSequence& blocks, const Attention3DParams& params,
                                    const PositionalTable& table,
                                    const AttentionOptions& options = {});

// Ablation path without 3D attention: each block is averaged over its plane.
VisualSequence pooled_visual_features(const BlockSequence& blocks);

}  // namespace htr
