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
#include "htr/framing.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace htr {

std::size_t block_count(std::size_t width, std::size_t frame_length) {
  if (frame_length == 0) throw std::invalid_argument("frame length must be positive");
  return (width + frame_length - 1) / frame_length;
}

BlockSequence extract_blocks(const Tensor& volume, int frame_length) {
  if (frame_length <= 0) {
    throw std::invalid_argument("frame length must be positive, got " +
                                std::to_string(frame_length));
  }
  if (volume.rank() != 3) {
    throw ad::ShapeError("extract_blocks: expected [C x W x H], got " +
                         ad::shape_str(volume.shape()));
  }
  const std::size_t s = static_cast<std::size_t>(frame_length);
  const std::size_t t = block_count(volume.dim(1), s);
  Tensor padded = t * s == volume.dim(1) ? volume : ad::pad_axis(volume, 1, t * s);
  BlockSequence seq;
  seq.frame_length = s;
  seq.blocks.reserve(t);
  for (std::size_t i = 0; i < t; ++i) seq.blocks.push_back(ad::narrow(padded, 1, i * s, s));
  return seq;
}

PositionalTable::PositionalTable(std::size_t channels, std::size_t max_positions)
    : channels_(channels), max_positions_(max_positions) {
  if (channels == 0 || channels % 2 != 0) {
    throw std::invalid_argument("positional encoding needs an even channel count, got " +
                                std::to_string(channels));
  }
  const std::size_t half = channels / 2;
  const double c = static_cast<double>(channels);
  table_.resize(max_positions * half);
  for (std::size_t p = 0; p < max_positions; ++p) {
    for (std::size_t j = 0; j < half; ++j) {
      const double two_i = static_cast<double>(j - j % 2);
      const double angle = static_cast<double>(p) * std::exp(two_i * (-std::log(10000.0) / c));
      table_[p * half + j] = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
}

Tensor add_positional_encoding(const Tensor& block, const PositionalTable& table) {
  if (block.rank() != 3) {
    throw ad::ShapeError("add_positional_encoding: expected [C x S x H], got " +
                         ad::shape_str(block.shape()));
  }
  const std::size_t c = block.dim(0), s = block.dim(1), h = block.dim(2);
  if (c % 2 != 0) {
    throw std::invalid_argument("positional encoding needs an even channel count, got " +
                                std::to_string(c));
  }
  if (c != table.channels()) {
    throw ad::ShapeError("positional table built for " + std::to_string(table.channels()) +
                         " channels, block has " + std::to_string(c));
  }
  if (s > table.max_positions() || h > table.max_positions()) {
    throw ad::ShapeError("block plane exceeds positional table size");
  }
  const std::size_t half = c / 2;
  Tensor enc({c, s, h});
  auto e = enc.mutable_values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t w = 0; w < s; ++w) {
      for (std::size_t y = 0; y < h; ++y) {
        e[(ch * s + w) * h + y] = ch < half ? table.at(w, ch) : table.at(y, ch - half);
      }
    }
  }
  return ad::add(block, enc);
}

Tensor reshape_block(const Tensor& block) {
  if (block.rank() != 3) {
    throw ad::ShapeError("reshape_block: expected [C x S x H], got " +
                         ad::shape_str(block.shape()));
  }
  const std::size_t c = block.dim(0), plane = block.dim(1) * block.dim(2);
  return ad::transpose(ad::reshape(block, {c, plane}));
}

Tensor unreshape_block(const Tensor& rows, std::size_t frame_length, std::size_t height) {
  if (rows.rank() != 2 || rows.dim(0) != frame_length * height) {
    throw ad::ShapeError("unreshape_block: rows " + ad::shape_str(rows.shape()) +
                         " do not match plane " + std::to_string(frame_length) + "x" +
                         std::to_string(height));
  }
  return ad::reshape(ad::transpose(rows), {rows.dim(1), frame_length, height});
}

}  // namespace htr
