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
#include "htr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace htr::ad {

double gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> wrt, double h) {
  std::vector<std::vector<double>> analytic;
  for (Tensor& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor y = f();
    tape.backward(y);
  }
  for (Tensor& t : wrt) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto values = wrt[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

double gradcheck(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
  return gradcheck([&f, &x]() { return f(x); }, std::vector<Tensor>{x}, h);
}

}  // namespace htr::ad
