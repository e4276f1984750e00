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
#include "htr/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "htr/attention3d.hpp"
#include "htr/autodiff.hpp"
#include "htr/backbone.hpp"
#include "htr/context.hpp"
#include "htr/ctc.hpp"
#include "htr/decoder.hpp"
#include "htr/framing.hpp"
#include "htr/gradcheck.hpp"
#include "htr/params.hpp"

namespace htr {

namespace {

Tensor random_tensor(const ad::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

std::vector<Tensor> all_params(ParameterStore& store) {
  std::vector<Tensor> out;
  for (auto& [name, t] : store) out.push_back(t);
  return out;
}

double check_conv_bn(Rng& rng) {
  Tensor x = random_tensor({2, 5, 4}, rng);
  x.set_requires_grad();
  Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
  Tensor b = random_tensor({3}, rng, -0.1, 0.1);
  Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({3}, rng, -0.5, 0.5);
  Tensor probe = random_tensor({3, 5, 4}, rng);
  for (Tensor* t : {&w, &b, &gamma, &beta}) t->set_requires_grad();
  Tensor running_mean({3}, 0.0), running_var({3}, 1.0);
  auto f = [&]() {
    Tensor y = batchnorm2d(ad::conv2d(x, w, b, 1, 1), gamma, beta, running_mean, running_var,
                           Mode::train, 0.9, 1e-5);
    return ad::sum(ad::mul(y, probe));
  };
  return ad::gradcheck(f, {x, w, b, gamma, beta});
}

double check_attention_block(Rng& rng) {
  const std::size_t c = 2, s = 3, h = 2;
  ParameterStore store;
  init_attention3d(store, "attn.", c, 4, 3, rng);
  for (auto& [name, t] : store) {
    for (double& v : t.mutable_values()) v += rng.uniform(-0.3, 0.3);
  }
  const Attention3DParams params = attention3d_params(store, "attn.", std::sqrt(static_cast<double>(c)));
  Tensor block = random_tensor({c, s, h}, rng);
  block.set_requires_grad();
  Tensor probe = random_tensor({c}, rng);
  PositionalTable table(c);
  auto f = [&]() {
    BlockSequence seq;
    seq.blocks = {block};
    seq.frame_length = s;
    VisualSequence out = forward_3d_attention(seq, params, table);
    return ad::sum(ad::mul(out.features[0], probe));
  };
  auto wrt = all_params(store);
  wrt.push_back(block);
  return ad::gradcheck(f, wrt);
}

double check_lstm(Rng& rng) {
  const std::size_t in = 3, hidden = 2, steps = 3;
  ParameterStore store;
  init_lstm(store, "lstm.", in, hidden, rng);
  const LstmParams params = lstm_params(store, "lstm.");
  std::vector<Tensor> xs, probes;
  for (std::size_t t = 0; t < steps; ++t) {
    xs.push_back(random_tensor({in}, rng));
    xs.back().set_requires_grad();
    probes.push_back(random_tensor({hidden}, rng));
  }
  auto f = [&]() {
    std::vector<Tensor> out = local_context(xs, params);
    Tensor acc = ad::sum(ad::mul(out[0], probes[0]));
    for (std::size_t t = 1; t < steps; ++t) acc = acc + ad::sum(ad::mul(out[t], probes[t]));
    return acc;
  };
  auto wrt = all_params(store);
  wrt.insert(wrt.end(), xs.begin(), xs.end());
  return ad::gradcheck(f, wrt);
}

double check_decoder(Rng& rng) {
  DecoderDims dims;
  dims.feature_dim = 4;
  dims.classes = 4;
  dims.attn_dim = 3;
  dims.hidden = 3;
  dims.embed_dim = 2;
  ParameterStore store;
  init_decoder(store, "dec.", dims, rng);
  for (auto& [name, t] : store) {
    for (double& v : t.mutable_values()) v += rng.uniform(-0.3, 0.3);
  }
  const DecoderParams params = decoder_params(store, "dec.");
  Tensor features = random_tensor({3, dims.feature_dim}, rng);
  features.set_requires_grad();
  const LabelSequence target = {2};  // one symbol plus the end token: two steps
  auto f = [&]() { return ce_loss(features, target, params); };
  auto wrt = all_params(store);
  wrt.push_back(features);
  return ad::gradcheck(f, wrt);
}

double check_ctc(Rng& rng) {
  Tensor logits = random_tensor({5, 4}, rng, -2.0, 2.0);
  const LabelSequence label = {1, 3, 3};
  return ad::gradcheck([&](const Tensor& x) { return ctc_loss(x, label); }, logits);
}

}  // namespace

std::vector<CheckResult> gradient_suite(std::uint64_t seed, double threshold) {
  std::vector<std::pair<std::string, std::function<double(Rng&)>>> checks = {
      {"conv+bn stage", check_conv_bn},
      {"3d attention block", check_attention_block},
      {"lstm 3 steps", check_lstm},
      {"attention decoder 2 steps", check_decoder},
      {"ctc loss", check_ctc},
  };
  std::vector<CheckResult> out;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Rng rng(mix_seed(seed, i));
    out.push_back({checks[i].first, checks[i].second(rng), threshold});
  }
  return out;
}

CheckResult ctc_oracle_suite(std::size_t cases, std::uint64_t seed, double threshold) {
  Rng rng(seed);
  double worst = 0.0;
  std::size_t done = 0;
  while (done < cases) {
    const std::size_t frames = 1 + rng.below(6);
    const std::size_t classes = 2 + rng.below(3);
    const std::size_t len = 1 + rng.below(3);
    LabelSequence label(len);
    for (int& l : label) l = 1 + static_cast<int>(rng.below(classes - 1));
    if (!ctc_feasible(frames, label)) continue;
    Tensor logits = random_tensor({frames, classes}, rng, -3.0, 3.0);
    const double fast = ctc_loss(logits, label).item();
    const double slow = brute_force_ctc(logits.values(), frames, classes, label);
    const double rel = std::abs(fast - slow) / std::max(std::abs(slow), 1e-300);
    worst = std::max(worst, std::isfinite(rel) ? rel : INFINITY);
    ++done;
  }
  return {"ctc vs brute force (" + std::to_string(cases) + " cases)", worst, threshold};
}

CheckResult ctc_total_probability(std::size_t frames, std::size_t classes, std::uint64_t seed,
                                  double threshold) {
  Rng rng(seed);
  Tensor logits = random_tensor({frames, classes}, rng, -2.0, 2.0);
  double total = 0.0;
  // Every label over the non-blank symbols of length 0..frames.
  std::vector<LabelSequence> frontier = {{}};
  for (std::size_t len = 0; len <= frames; ++len) {
    std::vector<LabelSequence> next;
    for (const auto& label : frontier) {
      const double nll = brute_force_ctc(logits.values(), frames, classes, label);
      if (std::isfinite(nll)) total += std::exp(-nll);
      for (std::size_t k = 1; k < classes; ++k) {
        LabelSequence longer = label;
        longer.push_back(static_cast<int>(k));
        next.push_back(std::move(longer));
      }
    }
    frontier = std::move(next);
  }
  return {"ctc total probability", std::abs(total - 1.0), threshold};
}

}  // namespace htr
