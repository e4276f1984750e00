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
#include "htr/params.hpp"

#include <cmath>
#include <stdexcept>

namespace htr {

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto fmix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return fmix(fmix(fmix(a) ^ b) ^ c);
}

Tensor& ParameterStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = items_.emplace(name, std::move(value));
  if (!inserted) throw std::invalid_argument("duplicate parameter '" + name + "'");
  it->second.set_requires_grad(true);
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::erase_prefix(const std::string& prefix) {
  std::size_t n = 0;
  for (auto it = items_.lower_bound(prefix); it != items_.end() && it->first.starts_with(prefix);) {
    it = items_.erase(it);
    ++n;
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

Tensor glorot_uniform(const Shape& shape, Rng& rng) {
  double fan_in = 1, fan_out = 1;
  if (shape.size() == 1) {
    fan_in = static_cast<double>(shape[0]);
  } else if (shape.size() >= 2) {
    double field = 1;
    for (std::size_t i = 2; i < shape.size(); ++i) field *= static_cast<double>(shape[i]);
    fan_out = static_cast<double>(shape[0]) * field;
    fan_in = static_cast<double>(shape[1]) * field;
  }
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(shape);
  for (double& v : t.mutable_values()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor filled(const Shape& shape, double value) { return Tensor(shape, value); }

}  // namespace htr
