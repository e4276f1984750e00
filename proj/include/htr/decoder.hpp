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

#include "htr/context.hpp"
#include "htr/ctc.hpp"
#include "htr/params.hpp"

namespace htr {

// Training-only attention decoder over integrated features. Class indices
// follow the CTC vocabulary; slot 0 (the CTC blank, never a target) doubles
// as the start token on the embedding side and the end token on the output
// side.
struct DecoderParams {
  Tensor W_q, b_q;    // [A x h], [A]
  Tensor W_k, b_k;    // [A x D], [A]
  Tensor W_a;         // [A x 1], applied to each previous attention weight
  Tensor w;           // [A]
  LstmParams lstm;    // input D + E, hidden h
  Tensor embedding;   // [classes x E]
  Tensor out_w, out_b;  // [classes x h], [classes]
};

inline constexpr int kStartToken = 0;
inline constexpr int kEndToken = 0;

struct DecoderDims {
  std::size_t feature_dim = 0;  // D
  std::size_t classes = 0;      // CTC classes including blank
  std::size_t attn_dim = 64;
  std::size_t hidden = 64;
  std::size_t embed_dim = 32;
};

void init_decoder(ParameterStore& params, const std::string& prefix, const DecoderDims& dims,
                  Rng& rng);
DecoderParams decoder_params(const ParameterStore& params, const std::string& prefix);

struct DecoderState {
  LstmState lstm;
  Tensor prev_alpha;      // [T]; all zero before the first step
  Tensor prev_embedding;  // [E]
};

// Values and their key projections k_i = tanh(W_k v_i + b_k), shared by all steps.
struct DecoderInputs {
  Tensor values;  // [T x D]
  Tensor keys;    // [T x A]
};

DecoderInputs prepare_decoder_inputs(const Tensor& features, const DecoderParams& params);
DecoderState initial_decoder_state(const DecoderInputs& inputs, const DecoderParams& params);
Tensor embed(const DecoderParams& params, int class_id);

struct DecoderStep {
  Tensor distribution;      // softmax over classes
  Tensor log_distribution;
  Tensor alpha;             // [T]
  Tensor context;           // [D]
  Tensor x;                 // LSTM output
  DecoderState next;        // prev_embedding left for the caller to set
};

// q = tanh(W_q h + b_q); a_i = tanh(W_a alpha_prev_i); e_i = w . tanh(q + k_i + a_i);
// alpha = softmax(e); x = LSTM(sum_i alpha_i v_i | p_prev).
DecoderStep decoder_step(const DecoderInputs& inputs, const DecoderState& state,
                         const DecoderParams& params);

// Teacher-forced negative log-likelihood of target + end token, averaged
// over the n + 1 predictions.
Tensor ce_loss(const Tensor& features, std::span<const int> target, const DecoderParams& params);

LabelSequence decoder_greedy(const Tensor& features, const DecoderParams& params,
                             std::size_t max_len);

}  // namespace htr
