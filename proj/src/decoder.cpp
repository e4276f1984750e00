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
#include "htr/decoder.hpp"

#include <algorithm>
#include <stdexcept>

namespace htr {

void init_decoder(ParameterStore& params, const std::string& prefix, const DecoderDims& d,
                  Rng& rng) {
  if (d.feature_dim == 0 || d.classes < 2 || d.attn_dim == 0 || d.hidden == 0 ||
      d.embed_dim == 0) {
    throw std::invalid_argument("decoder: dimensions must be positive");
  }
  params.add(prefix + "W_q", glorot_uniform({d.attn_dim, d.hidden}, rng));
  params.add(prefix + "b_q", filled({d.attn_dim}, 0.0));
  params.add(prefix + "W_k", glorot_uniform({d.attn_dim, d.feature_dim}, rng));
  params.add(prefix + "b_k", filled({d.attn_dim}, 0.0));
  params.add(prefix + "W_a", glorot_uniform({d.attn_dim, 1}, rng));
  params.add(prefix + "w", glorot_uniform({d.attn_dim}, rng));
  init_lstm(params, prefix + "lstm.", d.feature_dim + d.embed_dim, d.hidden, rng);
  params.add(prefix + "embedding", glorot_uniform({d.classes, d.embed_dim}, rng));
  params.add(prefix + "out.w", glorot_uniform({d.classes, d.hidden}, rng));
  params.add(prefix + "out.b", filled({d.classes}, 0.0));
}

DecoderParams decoder_params(const ParameterStore& params, const std::string& prefix) {
  return {params.at(prefix + "W_q"), params.at(prefix + "b_q"),   params.at(prefix + "W_k"),
          params.at(prefix + "b_k"), params.at(prefix + "W_a"),   params.at(prefix + "w"),
          lstm_params(params, prefix + "lstm."),                  params.at(prefix + "embedding"),
          params.at(prefix + "out.w"), params.at(prefix + "out.b")};
}

DecoderInputs prepare_decoder_inputs(const Tensor& features, const DecoderParams& params) {
  if (features.rank() != 2 || features.dim(0) == 0) {
    throw std::invalid_argument("decoder: expected a non-empty [T x D] feature matrix");
  }
  return {features, ad::tanh(ad::linear(features, params.W_k, params.b_k))};
}

Tensor embed(const DecoderParams& params, int class_id) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= params.embedding.dim(0)) {
    throw std::invalid_argument("decoder: class id " + std::to_string(class_id) +
                                " outside the embedding table");
  }
  return ad::row(params.embedding, static_cast<std::size_t>(class_id));
}

DecoderState initial_decoder_state(const DecoderInputs& inputs, const DecoderParams& params) {
  return {lstm_zero_state(params.lstm.hidden), Tensor(Shape{inputs.values.dim(0)}, 0.0),
          embed(params, kStartToken)};
}

DecoderStep decoder_step(const DecoderInputs& inputs, const DecoderState& state,
                         const DecoderParams& params) {
  const std::size_t frames = inputs.values.dim(0);
  if (state.prev_alpha.size() != frames) {
    throw ad::ShapeError("decoder_step: previous attention has " +
                         std::to_string(state.prev_alpha.size()) + " entries for " +
                         std::to_string(frames) + " frames");
  }
  Tensor q = ad::tanh(ad::linear(state.lstm.s, params.W_q, params.b_q));
  Tensor coverage =
      ad::tanh(ad::matmul(ad::reshape(state.prev_alpha, {frames, 1}), ad::transpose(params.W_a)));
  Tensor e = ad::matmul(ad::tanh(ad::add(ad::add(inputs.keys, q), coverage)), params.w);
  Tensor alpha = ad::softmax_lastdim(e);
  Tensor context = ad::matmul(alpha, inputs.values);
  LstmState next = lstm_step(ad::concat({context, state.prev_embedding}), state.lstm, params.lstm);
  Tensor logits = ad::linear(next.s, params.out_w, params.out_b);
  DecoderStep step;
  step.log_distribution = ad::log_softmax_lastdim(logits);
  step.distribution = ad::softmax_lastdim(logits);
  step.alpha = alpha;
  step.context = context;
  step.x = next.s;
  step.next = {next, alpha, state.prev_embedding};
  return step;
}

Tensor ce_loss(const Tensor& features, std::span<const int> target, const DecoderParams& params) {
  if (target.empty()) throw std::invalid_argument("ce_loss: target must be non-empty");
  const std::size_t classes = params.out_b.size();
  for (int id : target) {
    if (id <= kBlank || static_cast<std::size_t>(id) >= classes) {
      throw std::invalid_argument("ce_loss: target id " + std::to_string(id) +
                                  " is the blank or out of vocabulary");
    }
  }
  DecoderInputs inputs = prepare_decoder_inputs(features, params);
  DecoderState state = initial_decoder_state(inputs, params);
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t <= target.size(); ++t) {
    DecoderStep step = decoder_step(inputs, state, params);
    const int gold = t < target.size() ? target[t] : kEndToken;
    terms.push_back(ad::pick(step.log_distribution, static_cast<std::size_t>(gold)));
    state = step.next;
    if (t < target.size()) state.prev_embedding = embed(params, target[t]);
  }
  return ad::scale(ad::sum(ad::stack(terms)), -1.0 / static_cast<double>(terms.size()));
}

LabelSequence decoder_greedy(const Tensor& features, const DecoderParams& params,
                             std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("decoder_greedy: max_len must be positive");
  DecoderInputs inputs = prepare_decoder_inputs(features, params);
  DecoderState state = initial_decoder_state(inputs, params);
  LabelSequence out;
  for (std::size_t t = 0; t < max_len; ++t) {
    DecoderStep step = decoder_step(inputs, state, params);
    auto dist = step.distribution.values();
    const int best = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    if (best == kEndToken) break;
    out.push_back(best);
    state = step.next;
    state.prev_embedding = embed(params, best);
  }
  return out;
}

}  // namespace htr
