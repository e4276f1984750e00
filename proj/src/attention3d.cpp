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
#include "htr/attention3d.hpp"

#include <cmath>

namespace htr {

void init_sublayer(ParameterStore& params, const std::string& prefix, std::size_t channels,
                   std::size_t ffn_dim, Rng& rng) {
  params.add(prefix + "ln.gamma", filled({channels}, 1.0));
  params.add(prefix + "ln.beta", filled({channels}, 0.0));
  params.add(prefix + "fc1.w", glorot_uniform({ffn_dim, channels}, rng));
  params.add(prefix + "fc1.b", filled({ffn_dim}, 0.0));
  params.add(prefix + "fc2.w", glorot_uniform({channels, ffn_dim}, rng));
  params.add(prefix + "fc2.b", filled({channels}, 0.0));
}

SublayerParams sublayer_params(const ParameterStore& params, const std::string& prefix) {
  return {params.at(prefix + "ln.gamma"), params.at(prefix + "ln.beta"),
          params.at(prefix + "fc1.w"),    params.at(prefix + "fc1.b"),
          params.at(prefix + "fc2.w"),    params.at(prefix + "fc2.b")};
}

void init_attention3d(ParameterStore& params, const std::string& prefix, std::size_t channels,
                      std::size_t ffn_dim, std::size_t agg_dim, Rng& rng) {
  init_sublayer(params, prefix + "sub.", channels, ffn_dim, rng);
  params.add(prefix + "agg.W", glorot_uniform({agg_dim, channels}, rng));
  params.add(prefix + "agg.b", filled({agg_dim}, 0.0));
  params.add(prefix + "agg.w", glorot_uniform({agg_dim}, rng));
}

Attention3DParams attention3d_params(const ParameterStore& params, const std::string& prefix,
                                     double scale_s) {
  return {sublayer_params(params, prefix + "sub."), params.at(prefix + "agg.W"),
          params.at(prefix + "agg.b"), params.at(prefix + "agg.w"), scale_s};
}

Tensor self_attention(const Tensor& rows, double scale_s) {
  if (rows.rank() != 2) {
    throw ad::ShapeError("self_attention: expected [N x C], got " + ad::shape_str(rows.shape()));
  }
  Tensor scores = ad::scale(ad::matmul(rows, ad::transpose(rows)), 1.0 / scale_s);
  return ad::matmul(ad::softmax_lastdim(scores), rows);
}

Tensor sublayer(const Tensor& rows, const SublayerParams& p, double ln_eps) {
  Tensor x = ad::layer_norm(rows, p.ln_gamma, p.ln_beta, ln_eps);
  x = ad::tanh(ad::linear(x, p.w1, p.b1));
  return ad::linear(x, p.w2, p.b2);
}

Aggregation aggregate(const Tensor& rows, const Attention3DParams& params, bool sum_normalized_weights) {
  Tensor e = ad::matmul(ad::tanh(ad::linear(rows, params.agg_W, params.agg_b)), params.agg_w);
  Tensor alpha = sum_normalized_weights ? ad::mul(e, ad::reciprocal(ad::sum(e))) : ad::softmax_lastdim(e);
  return {ad::matmul(alpha, rows), alpha};
}

VisualSequence forward_3d_attention(const BlockSequence& blocks, const Attention3DParams& params,
                                    const PositionalTable& table,
                                    const AttentionOptions& options) {
  VisualSequence out;
  out.frame_length = blocks.frame_length;
  for (const Tensor& block : blocks.blocks) {
    out.plane_height = block.dim(2);
    Tensor rows = reshape_block(add_positional_encoding(block, table));
    Tensor attended = block_self_attention(rows, params.scale_s);
    Tensor refined = sublayer(attended, params.sublayer, options.ln_eps);
    Aggregation agg = aggregate(refined, params, options.sum_normalized_weights);
    out.features.push_back(agg.r);
    out.alphas.emplace_back(agg.alpha.values().begin(), agg.alpha.values().end());
  }
  return out;
}

VisualSequence pooled_visual_features(const BlockSequence& blocks) {
  VisualSequence out;
  out.frame_length = blocks.frame_length;
  for (const Tensor& block : blocks.blocks) {
    out.plane_height = block.dim(2);
    Tensor rows = reshape_block(block);
    const std::size_t n = rows.dim(0);
    Tensor weights(Shape{n}, 1.0 / static_cast<double>(n));
    out.features.push_back(ad::matmul(weights, rows));
    out.alphas.emplace_back(n, 1.0 / static_cast<double>(n));
  }
  return out;
}

}  // namespace htr
