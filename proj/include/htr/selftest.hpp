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

#include <cstdint>
#include <string>
#include <vector>

namespace htr {

struct CheckResult {
  std::string name;
  double value = 0.0;      // observed error
  double threshold = 0.0;  // passes when value < threshold
  bool passed() const { return value < threshold; }
};

// Finite-difference checks through a conv+BN stage, a 3D attention block on
// a 2x3x2 input, a 3-step LSTM, a 2-step attention decoder and ctc_loss.
std::vector<CheckResult> gradient_suite(std::uint64_t seed = 7, double threshold = 1e-4);

// ctc_loss against exhaustive path enumeration on random feasible instances
// (T <= 6, K <= 4, label length <= 3). Value is the max relative error.
CheckResult ctc_oracle_suite(std::size_t cases = 1000, std::uint64_t seed = 11, double threshold = 1e-10);

// |sum over every label of exp(-brute_force_ctc) - 1| for random logits.
CheckResult ctc_total_probability(std::size_t frames = 4, std::size_t classes = 3,
                                  std::uint64_t seed = 13, double threshold = 1e-9);

}  // namespace htr
