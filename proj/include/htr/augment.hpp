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

#include "htr/image.hpp"

namespace htr {

struct AugmentOptions {
  double p_shift = 0.5;
  double p_blur = 0.5;
  double p_gamma = 0.5;
  double p_contrast = 0.5;
  double p_affine = 0.5;
  double max_shift = 0.1;  // fraction of each dimension
  double gamma_lo = 0.7, gamma_hi = 1.3;
  double contrast_lo = 0.8, contrast_hi = 1.2;
  double max_shear = 0.1;
  double scale_lo = 0.95, scale_hi = 1.05;

  static AugmentOptions disabled();
};

// Location shift, 3x3 box blur, gamma, contrast and a shear+scale linear
// transform, each applied independently. Shifts never move ink off the
// canvas. Output is clamped to [0, 1].
GrayImage augment(const GrayImage& image, std::uint64_t seed,
                  const AugmentOptions& options = {});

}  // namespace htr
