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

#include "htr/image.hpp"
#include "htr/vocabulary.hpp"

namespace htr {

struct SynthConfig {
  std::size_t num_samples = 32;
  std::size_t num_val = 16;
  std::size_t symbols = 5;  // K
  std::size_t min_chars = 2;
  std::size_t max_chars = 6;
  std::size_t canvas_height = 64;
  std::size_t glyph_width = 0;  // 0 derives it from the canvas height
  std::size_t min_gap = 2;
  std::size_t max_gap = 6;
  double jitter = 0.05;  // stroke endpoint jitter, fraction of the glyph box
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::uint64_t seed = 42;

  std::size_t effective_glyph_width() const;
  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

struct SampleRecord {
  GrayImage image;
  std::string label;
  std::string id;
};

// Line segment in the unit glyph box; (0,0) is the top-left corner.
struct Stroke {
  double x0, y0, x1, y1;
};
using Glyph = std::vector<Stroke>;

// Distinct procedural stroke patterns, one per class, fixed for a given K.
std::vector<Glyph> glyph_set(std::size_t symbols);

Vocabulary synth_vocabulary(const SynthConfig& config);

// Renders `count` lines from the stream selected by `split`; ids are
// "<split>_<index>".
std::vector<SampleRecord> synth_generate(const SynthConfig& config, std::size_t count,
                                         const std::string& split);

}  // namespace htr
