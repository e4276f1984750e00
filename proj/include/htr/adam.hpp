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

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "htr/params.hpp"

namespace htr {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamOptions&) const = default;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
};

// Moments are tracked per parameter, each with its own step count, so
// parameters added mid-training (the decoder) get correct bias correction.
struct AdamState {
  std::map<std::string, AdamMoments> moments;
  std::size_t step = 0;  // optimizer steps taken
};

// One bias-corrected Adam update of every parameter from its accumulated
// gradient. Throws std::runtime_error naming the first parameter with a
// non-finite gradient; no parameter is modified in that case. When `select`
// is given, parameters it rejects are left untouched, moments included.
using ParamFilter = std::function<bool(const std::string&)>;
void adam_step(ParameterStore& params, AdamState& state, double lr, const AdamOptions& options = {},
               const ParamFilter& select = {});

}  // namespace htr
