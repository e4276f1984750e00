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

#include <vector>

#include "htr/autodiff.hpp"

namespace htr {

using ad::Tensor;

// Non-overlapping width-S windows over a [C x W x H] feature volume, scanned
// left to right. The last window is zero-padded on the right when S does not
// divide W.
struct BlockSequence {
  std::vector<Tensor> blocks;  // each [C x S x H]
  std::size_t frame_length = 0;
  std::size_t count() const { return blocks.size(); }
};

std::size_t block_count(std::size_t width, std::size_t frame_length);

BlockSequence extract_blocks(const Tensor& volume, int frame_length);

// Sinusoid table of width C/2 shared by the width and height halves.
class PositionalTable {
 public:
  static constexpr std::size_t kDefaultMaxPositions = 512;

  explicit PositionalTable(std::size_t channels,
                           std::size_t max_positions = kDefaultMaxPositions);

  std::size_t channels() const { return channels_; }
  std::size_t max_positions() const { return max_positions_; }
  // Entry j of row p: sin(p * e^(2i * -ln(10000) / C)) for j = 2i and the
  // matching cosine for j = 2i + 1.
  double at(std::size_t position, std::size_t j) const {
    return table_[position * (channels_ / 2) + j];
  }
  const std::vector<double>& values() const { return table_; }

 private:
  std::size_t channels_;
  std::size_t max_positions_;
  std::vector<double> table_;
};

// Adds the width encoding of column s to channels [0, C/2) and the height
// encoding of row h to channels [C/2, C) at every plane location (s, h).
Tensor add_positional_encoding(const Tensor& block, const PositionalTable& table);

// [C x S x H] -> [SH x C]; row s*H + h holds the channel vector at (s, h).
Tensor reshape_block(const Tensor& block);
// Inverse of reshape_block.
Tensor unreshape_block(const Tensor& rows, std::size_t frame_length, std::size_t height);

}  // namespace htr
