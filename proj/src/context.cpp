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
#include "htr/context.hpp"

#include <stdexcept>

namespace htr {

void init_lstm(ParameterStore& params, const std::string& prefix, std::size_t input_dim,
               std::size_t hidden, Rng& rng, double forget_bias) {
  if (hidden == 0 || input_dim == 0) throw std::invalid_argument("lstm: dimensions must be positive");
  // Each gate block is initialized with its own fan.
  Tensor W({4 * hidden, input_dim});
  Tensor U({4 * hidden, hidden});
  for (std::size_t g = 0; g < 4; ++g) {
    Tensor wg = glorot_uniform({hidden, input_dim}, rng);
    Tensor ug = glorot_uniform({hidden, hidden}, rng);
    std::copy(wg.values().begin(), wg.values().end(),
              W.mutable_values().begin() + static_cast<long>(g * hidden * input_dim));
    std::copy(ug.values().begin(), ug.values().end(),
              U.mutable_values().begin() + static_cast<long>(g * hidden * hidden));
  }
  Tensor b({4 * hidden}, 0.0);
  for (std::size_t j = 0; j < hidden; ++j) b.mutable_values()[j] = forget_bias;
  params.add(prefix + "W", W);
  params.add(prefix + "U", U);
  params.add(prefix + "b", b);
}

LstmParams lstm_params(const ParameterStore& params, const std::string& prefix) {
  LstmParams p{params.at(prefix + "W"), params.at(prefix + "U"), params.at(prefix + "b"), 0};
  p.hidden = p.U.dim(1);
  return p;
}

LstmState lstm_zero_state(std::size_t hidden) {
  return {Tensor(Shape{hidden}, 0.0), Tensor(Shape{hidden}, 0.0)};
}

namespace {

LstmState lstm_cell(const Tensor& input_part, const LstmState& state, const LstmParams& p) {
  const std::size_t h = p.hidden;
  if (state.s.size() != h || state.c.size() != h) {
    throw ad::ShapeError("lstm_step: state of size " + std::to_string(state.s.size()) +
                         " for hidden size " + std::to_string(h));
  }
  Tensor z = ad::add(input_part, ad::matmul(p.U, state.s));
  auto gate = [&](Gate g) { return ad::narrow(z, 0, static_cast<std::size_t>(g) * h, h); };
  Tensor forget = ad::sigmoid(gate(Gate::forget));
  Tensor input = ad::sigmoid(gate(Gate::input));
  Tensor candidate = ad::tanh(gate(Gate::candidate));
  Tensor output = ad::sigmoid(gate(Gate::output));
  Tensor c = ad::add(ad::mul(forget, state.c), ad::mul(input, candidate));
  return {ad::mul(output, ad::tanh(c)), c};
}

}  // namespace

LstmState lstm_step(const Tensor& x, const LstmState& state, const LstmParams& params) {
  if (x.rank() != 1 || x.dim(0) != params.W.dim(1)) {
    throw ad::ShapeError("lstm_step: input " + ad::shape_str(x.shape()) +
                         " does not match weights " + ad::shape_str(params.W.shape()));
  }
  return lstm_cell(ad::linear(x, params.W, params.b), state, params);
}

std::vector<Tensor> local_context(const std::vector<Tensor>& visual, const LstmParams& params) {
  std::vector<Tensor> out;
  if (visual.empty()) return out;
  // Input projections for all timesteps in one product.
  Tensor projected = ad::linear(ad::stack(visual), params.W, params.b);
  LstmState state = lstm_zero_state(params.hidden);
  for (std::size_t t = 0; t < visual.size(); ++t) {
    state = lstm_cell(ad::row(projected, t), state, params);
    out.push_back(state.s);
  }
  return out;
}

std::vector<Tensor> global_context(const std::vector<Tensor>& visual, double scale_s,
                                   const SublayerParams* refine, double ln_eps) {
  std::vector<Tensor> out;
  if (visual.empty()) return out;
  Tensor g = self_attention(ad::stack(visual), scale_s);
  if (refine != nullptr) g = sublayer(g, *refine, ln_eps);
  for (std::size_t t = 0; t < visual.size(); ++t) out.push_back(ad::row(g, t));
  return out;
}

IntegratedSequence integrate(const std::vector<Tensor>& visual, const std::vector<Tensor>& global,
                             const std::vector<Tensor>& local) {
  if (visual.size() != global.size() || visual.size() != local.size()) {
    throw std::invalid_argument("integrate: sequence lengths differ (" +
                                std::to_string(visual.size()) + ", " +
                                std::to_string(global.size()) + ", " +
                                std::to_string(local.size()) + ")");
  }
  IntegratedSequence seq;
  if (visual.empty()) return seq;
  seq.visual_dim = visual.front().size();
  seq.global_dim = global.front().size();
  seq.local_dim = local.front().size();
  for (std::size_t t = 0; t < visual.size(); ++t) {
    seq.features.push_back(ad::concat({visual[t], global[t], local[t]}));
  }
  return seq;
}

FeatureParts split_feature(const Tensor& v, const IntegratedSequence& layout) {
  if (v.rank() != 1 || v.size() != layout.dim()) {
    throw ad::ShapeError("split_feature: vector " + ad::shape_str(v.shape()) +
                         " does not match layout of width " + std::to_string(layout.dim()));
  }
  return {ad::narrow(v, 0, 0, layout.visual_dim),
          ad::narrow(v, 0, layout.visual_dim, layout.global_dim),
          ad::narrow(v, 0, layout.visual_dim + layout.global_dim, layout.local_dim)};
}

}  // namespace htr
