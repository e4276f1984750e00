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

#include "htr/attention3d.hpp"
#include "htr/autodiff.hpp"
#include "htr/params.hpp"

namespace htr {

// Gate weights are stacked row-wise in the order forget, input, candidate,
// output: W is [4h x in], U is [4h x h], b is [4h].
struct LstmParams {
  Tensor W, U, b;
  std::size_t hidden = 0;
};

struct LstmState {
  Tensor s;  // output
  Tensor c;  // cell
};

enum class Gate : std::size_t { forget = 0, input = 1, candidate = 2, output = 3 };

void init_lstm(ParameterStore& params, const std::string& prefix, std::size_t input_dim,
               std::size_t hidden, Rng& rng, double forget_bias = 1.0);
LstmParams lstm_params(const ParameterStore& params, const std::string& prefix);
LstmState lstm_zero_state(std::size_t hidden);

// One step of the standard peephole-free LSTM:
//   g = sigm(W_f x + U_f s + b_f),  i = sigm(W_i x + U_i s + b_i)
//   c~ = tanh(W_c x + U_c s + b_c), c' = g * c + i * c~
//   o = sigm(W_o x + U_o s + b_o),  s' = o * tanh(c')
LstmState lstm_step(const Tensor& x, const LstmState& state, const LstmParams& params);

// Left-to-right unroll from a zero state; returns s_1..s_T.
std::vector<Tensor> local_context(const std::vector<Tensor>& visual, const LstmParams& params);

// softmax(R R^T / s) R over the whole sequence, optionally refined by a
// sublayer. Returns one row per timestep.
std::vector<Tensor> global_context(const std::vector<Tensor>& visual, double scale_s,
                                   const SublayerParams* refine = nullptr,
                                   double ln_eps = 1e-5);

struct IntegratedSequence {
  std::vector<Tensor> features;  // v_t = r_t | l_t | s_t
  std::size_t visual_dim = 0;
  std::size_t global_dim = 0;
  std::size_t local_dim = 0;

  std::size_t size() const { return features.size(); }
  std::size_t dim() const { return visual_dim + global_dim + local_dim; }
  // [T x dim]; requires T >= 1.
  Tensor matrix() const { return ad::stack(features); }
};

IntegratedSequence integrate(const std::vector<Tensor>& visual, const std::vector<Tensor>& global,
                             const std::vector<Tensor>& local);

struct FeatureParts {
  Tensor visual, global, local;
};
FeatureParts split_feature(const Tensor& v, const IntegratedSequence& layout);

}  // namespace htr
