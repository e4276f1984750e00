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

#include <span>
#include <vector>

#include "htr/autodiff.hpp"

namespace htr {

using ad::Tensor;

// Class ids of a transcription. Real symbols are 1..K-1; 0 is the CTC blank.
using LabelSequence = std::vector<int>;

inline constexpr int kBlank = 0;

// Merges adjacent repeats, then drops blanks.
LabelSequence collapse_phi(std::span<const int> path, int blank = kBlank);

// Smallest frame count that can emit `label`: one frame per symbol plus a
// separating blank between each pair of equal neighbours.
std::size_t ctc_min_frames(std::span<const int> label);
bool ctc_feasible(std::size_t frames, std::span<const int> label);

// -log sum over paths pi with collapse_phi(pi) == label of prod_t
// softmax(logits_t)[pi_t], by log-space forward-backward. logits: [T x K].
// Throws std::invalid_argument when the label cannot be emitted in T frames
// or contains the blank / an out-of-range id.
Tensor ctc_loss(const Tensor& logits, std::span<const int> label, int blank = kBlank);

// Exhaustive path enumeration; requires K^T <= 1e6. Returns +inf when no path
// collapses to `label`. logits are row-major [frames x classes].
double brute_force_ctc(std::span<const double> logits, std::size_t frames, std::size_t classes,
                       std::span<const int> label, int blank = kBlank);

// Per-frame argmax (lowest index on ties), then collapse_phi.
LabelSequence greedy_decode(const Tensor& logits, int blank = kBlank);
std::vector<int> best_path(const Tensor& logits);

}  // namespace htr
