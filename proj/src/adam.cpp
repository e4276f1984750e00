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
#include "htr/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace htr {

void adam_step(ParameterStore& params, AdamState& state, double lr, const AdamOptions& options,
               const ParamFilter& select) {
  for (auto& [name, tensor] : params) {
    if (select && !select(name)) continue;
    for (double g : tensor.grad()) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam: non-finite gradient in parameter '" + name + "'");
      }
    }
  }
  ++state.step;
  for (auto& [name, tensor] : params) {
    if (select && !select(name)) continue;
    AdamMoments& mom = state.moments[name];
    if (mom.m.size() != tensor.size()) {
      if (!mom.m.empty()) {
        throw std::runtime_error("adam: moment buffers for '" + name + "' do not match its shape");
      }
      mom.m.assign(tensor.size(), 0.0);
      mom.v.assign(tensor.size(), 0.0);
    }
    ++mom.step;
    const double t = static_cast<double>(mom.step);
    const double c1 = 1.0 - std::pow(options.beta1, t);
    const double c2 = 1.0 - std::pow(options.beta2, t);
    auto g = tensor.grad();
    auto x = tensor.mutable_values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      mom.m[i] = options.beta1 * mom.m[i] + (1.0 - options.beta1) * g[i];
      mom.v[i] = options.beta2 * mom.v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      x[i] -= lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

}  // namespace htr
