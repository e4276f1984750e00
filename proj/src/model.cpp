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
#include "htr/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>

namespace htr {

double ModelConfig::scale_s() const { return std::sqrt(static_cast<double>(channels())); }

void ModelConfig::validate() const {
  backbone.validate();
  if (channels() % 2 != 0) {
    throw std::invalid_argument("model: channel width must be even, got " +
                                std::to_string(channels()));
  }
  if (scales.empty()) throw std::invalid_argument("model: at least one frame length is required");
  for (int s : scales) {
    if (s <= 0) throw std::invalid_argument("model: frame lengths must be positive");
  }
  if (std::set<int>(scales.begin(), scales.end()).size() != scales.size()) {
    throw std::invalid_argument("model: duplicate frame length");
  }
  if (ffn_dim == 0 || agg_dim == 0 || decoder_attn_dim == 0 || decoder_hidden == 0 ||
      decoder_embed == 0) {
    throw std::invalid_argument("model: layer widths must be positive");
  }
}

bool ModelBundle::has_branch(int scale) const {
  return params.contains(branch_prefix(scale) + "cls.w");
}

bool ModelBundle::has_decoder(int scale) const {
  return params.contains(decoder_prefix(config, scale) + "w");
}

std::string branch_prefix(int scale) { return "branch.s" + std::to_string(scale) + "."; }

std::string decoder_prefix(const ModelConfig& config, int scale) {
  return config.share_decoder ? std::string("decoder.shared.")
                              : "decoder.s" + std::to_string(scale) + ".";
}

namespace {

void init_branch(ModelBundle& bundle, int scale, Rng& rng) {
  const ModelConfig& c = bundle.config;
  const std::string p = branch_prefix(scale);
  if (c.use_3d_attention) {
    init_attention3d(bundle.params, p + "attn.", c.channels(), c.ffn_dim, c.agg_dim, rng);
  }
  if (c.use_context) {
    if (c.global_sublayer) init_sublayer(bundle.params, p + "global.", c.channels(), c.ffn_dim, rng);
    init_lstm(bundle.params, p + "lstm.", c.channels(), c.hidden(), rng);
  }
  bundle.params.add(p + "cls.w", glorot_uniform({bundle.vocab.classes(), c.feature_dim()}, rng));
  bundle.params.add(p + "cls.b", filled({bundle.vocab.classes()}, 0.0));
}

}  // namespace

ModelBundle create_bundle(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed) {
  config.validate();
  if (vocab.classes() < 2) throw std::invalid_argument("model: vocabulary has no symbols");
  ModelBundle bundle;
  bundle.config = config;
  bundle.vocab = vocab;
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  init_backbone(config.backbone, bundle.params, bundle.buffers, rng);
  // Each branch draws from its own stream so adding or removing a scale
  // leaves the others unchanged.
  for (int s : config.scales) {
    Rng branch_rng(mix_seed(seed, 0x6272616e6368ULL, static_cast<std::uint64_t>(s)));
    init_branch(bundle, s, branch_rng);
  }
  return bundle;
}

void init_decoders(ModelBundle& bundle, std::uint64_t seed) {
  DecoderDims dims;
  dims.feature_dim = bundle.config.feature_dim();
  dims.classes = bundle.vocab.classes();
  dims.attn_dim = bundle.config.decoder_attn_dim;
  dims.hidden = bundle.config.decoder_hidden;
  dims.embed_dim = bundle.config.decoder_embed;
  for (int s : bundle.config.scales) {
    if (bundle.has_decoder(s)) continue;
    Rng rng(mix_seed(seed, 0x646563ULL, bundle.config.share_decoder ? 0 : static_cast<std::uint64_t>(s)));
    init_decoder(bundle.params, decoder_prefix(bundle.config, s), dims, rng);
  }
}

void prune_branches(ModelBundle& bundle, const std::vector<int>& keep) {
  std::vector<int> remaining;
  for (int s : bundle.config.scales) {
    if (std::find(keep.begin(), keep.end(), s) != keep.end()) {
      remaining.push_back(s);
      continue;
    }
    bundle.params.erase_prefix(branch_prefix(s));
    if (!bundle.config.share_decoder) bundle.params.erase_prefix(decoder_prefix(bundle.config, s));
    const std::string bp = branch_prefix(s);
    const std::string dp = "decoder.s" + std::to_string(s) + ".";
    for (auto it = bundle.adam.moments.begin(); it != bundle.adam.moments.end();) {
      it = it->first.starts_with(bp) || it->first.starts_with(dp) ? bundle.adam.moments.erase(it)
                                                                 : std::next(it);
    }
  }
  if (remaining.empty() && bundle.config.share_decoder) bundle.params.erase_prefix("decoder.shared.");
  bundle.config.scales = remaining;
}

const PositionalTable& positional_table(std::size_t channels) {
  thread_local std::map<std::size_t, std::unique_ptr<PositionalTable>> cache;
  auto& slot = cache[channels];
  if (!slot) slot = std::make_unique<PositionalTable>(channels);
  return *slot;
}

BranchOutput forward_branch(const FeatureVolume& volume, const ModelBundle& bundle, int scale) {
  if (!bundle.has_branch(scale)) {
    throw std::invalid_argument("model has no branch for frame length " + std::to_string(scale));
  }
  const ModelConfig& c = bundle.config;
  const std::string p = branch_prefix(scale);
  BlockSequence blocks = extract_blocks(volume.data, scale);

  BranchOutput out;
  out.scale = scale;
  if (c.use_3d_attention) {
    AttentionOptions options{c.sum_normalized_weights, c.ln_eps};
    out.visual = forward_3d_attention(blocks, attention3d_params(bundle.params, p + "attn.", c.scale_s()),
                                      positional_table(c.channels()), options);
  } else {
    out.visual = pooled_visual_features(blocks);
  }

  if (c.use_context) {
    SublayerParams refine;
    if (c.global_sublayer) refine = sublayer_params(bundle.params, p + "global.");
    std::vector<Tensor> global = global_context(out.visual.features, c.scale_s(),
                                                c.global_sublayer ? &refine : nullptr, c.ln_eps);
    std::vector<Tensor> local = local_context(out.visual.features, lstm_params(bundle.params, p + "lstm."));
    out.features = integrate(out.visual.features, global, local);
  } else {
    out.features.features = out.visual.features;
    out.features.visual_dim = c.channels();
  }
  out.logits = ad::linear(out.features.matrix(), bundle.params.at(p + "cls.w"),
                          bundle.params.at(p + "cls.b"));
  return out;
}

TrainForward forward_train(const Tensor& image, ModelBundle& bundle, Mode mode) {
  if (bundle.config.scales.empty()) throw std::invalid_argument("model has no branches");
  TrainForward out;
  out.volume = backbone_forward(image, bundle.config.backbone, bundle.params, bundle.buffers, mode);
  for (int s : bundle.config.scales) out.branches.push_back(forward_branch(out.volume, bundle, s));
  return out;
}

Tensor infer_logits(const Tensor& image, ModelBundle& bundle) {
  const int s = bundle.config.infer_scale;
  if (!bundle.has_branch(s)) {
    throw std::invalid_argument("model has no inference branch for frame length " + std::to_string(s));
  }
  FeatureVolume volume =
      backbone_forward(image, bundle.config.backbone, bundle.params, bundle.buffers, Mode::eval);
  return forward_branch(volume, bundle, s).logits;
}

LabelSequence forward_infer(const Tensor& image, ModelBundle& bundle) {
  return greedy_decode(infer_logits(image, bundle));
}

}  // namespace htr
