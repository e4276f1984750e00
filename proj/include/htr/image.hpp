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

#include <filesystem>
#include <vector>

#include "htr/tensor.hpp"

namespace htr {

// Grayscale raster with values in [0, 1], row-major (y * width + x).
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

// Binary 8-bit PGM (P5) or grayscale PNG, normalized to [0, 1].
GrayImage load_image(const std::filesystem::path& path);
// As above, then resized to `height` rows preserving the aspect ratio.
GrayImage load_image(const std::filesystem::path& path, std::size_t height);

GrayImage load_pgm(const std::filesystem::path& path);
GrayImage load_png(const std::filesystem::path& path);
// Quantizes to 8 bits (round to nearest).
void save_pgm(const GrayImage& image, const std::filesystem::path& path);

GrayImage resize_bilinear(const GrayImage& image, std::size_t width, std::size_t height);
GrayImage resize_to_height(const GrayImage& image, std::size_t height);

// [1 x W x H] model input.
ad::Tensor image_to_tensor(const GrayImage& image);

}  // namespace htr
