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
#include <vector>

#include "htr/tensor.hpp"

namespace htr::ad {

// Compares taped gradients of a scalar function against central differences.
// Returns max over all components of |analytic - numeric| / max(1, |analytic|).
// `wrt` tensors must require grad; their existing grads are cleared.
double gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> wrt,
                 double h = 1e-5);

double gradcheck(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                 double h = 1e-5);

}  // namespace htr::ad
