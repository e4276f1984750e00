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
#include <map>
#include <random>
#include <string>

#include "htr/tensor.hpp"

namespace htr {

using ad::Shape;
using ad::Tensor;

// Deterministic generator. Conversions to floating point are done here rather
// than through <random> distributions so streams are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

// Mixes several integers into one seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

// Named trainable tensors kept in lexicographic order, which fixes the order
// of every traversal (optimizer updates, serialization).
class ParameterStore {
 public:
  using Map = std::map<std::string, Tensor>;

  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return items_.count(name) != 0; }
  // Removes every entry whose name starts with `prefix`; returns the count.
  std::size_t erase_prefix(const std::string& prefix);
  void zero_grad();
  std::size_t scalar_count() const;
  std::size_t size() const { return items_.size(); }

  Map::iterator begin() { return items_.begin(); }
  Map::iterator end() { return items_.end(); }
  Map::const_iterator begin() const { return items_.begin(); }
  Map::const_iterator end() const { return items_.end(); }

 private:
  Map items_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)). For rank > 2 the trailing axes
// are receptive field and multiply both fans.
Tensor glorot_uniform(const Shape& shape, Rng& rng);
Tensor filled(const Shape& shape, double value);

}  // namespace htr
