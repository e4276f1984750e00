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
#include "htr/augment.hpp"

#include <algorithm>
#include <cmath>

#include "htr/params.hpp"

namespace htr {

namespace {

constexpr double kInk = 1e-3;

double sample(const GrayImage& img, double x, double y) {
  if (x < -0.5 || y < -0.5 || x > img.width - 0.5 || y > img.height - 0.5) return 0.0;
  const double fx = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const double fy = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const auto x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double wx = fx - x0, wy = fy - y0;
  return (img.at(x0, y0) * (1 - wx) + img.at(x1, y0) * wx) * (1 - wy) +
         (img.at(x0, y1) * (1 - wx) + img.at(x1, y1) * wx) * wy;
}

GrayImage affine(const GrayImage& img, double shear, double sx, double sy) {
  GrayImage out(img.width, img.height);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double v = (y - cy) / sy;
      const double u = (x - cx) / sx - shear * v;
      out.at(x, y) = sample(img, u + cx, v + cy);
    }
  }
  return out;
}

struct InkBox {
  long x0, y0, x1, y1;  // inclusive; x0 > x1 when empty
};

InkBox ink_box(const GrayImage& img) {
  InkBox b{static_cast<long>(img.width), static_cast<long>(img.height), -1, -1};
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      if (img.at(x, y) > kInk) {
        b.x0 = std::min(b.x0, static_cast<long>(x));
        b.x1 = std::max(b.x1, static_cast<long>(x));
        b.y0 = std::min(b.y0, static_cast<long>(y));
        b.y1 = std::max(b.y1, static_cast<long>(y));
      }
    }
  }
  return b;
}

long pick_offset(Rng& rng, std::size_t extent, double fraction, long lo_room, long hi_room) {
  const long limit = static_cast<long>(std::floor(fraction * extent));
  const long lo = -std::min(limit, std::max(0L, lo_room));
  const long hi = std::min(limit, std::max(0L, hi_room));
  return lo + static_cast<long>(rng.below(static_cast<std::size_t>(hi - lo + 1)));
}

GrayImage shift(const GrayImage& img, long dx, long dy) {
  GrayImage out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const long sx = static_cast<long>(x) - dx, sy = static_cast<long>(y) - dy;
      if (sx >= 0 && sy >= 0 && sx < static_cast<long>(img.width) && sy < static_cast<long>(img.height)) {
        out.at(x, y) = img.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy));
      }
    }
  }
  return out;
}

GrayImage box_blur(const GrayImage& img) {
  GrayImage out(img.width, img.height);
  const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double acc = 0;
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          const long xx = std::clamp(x + dx, 0L, w - 1), yy = std::clamp(y + dy, 0L, h - 1);
          acc += img.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy));
        }
      }
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc / 9.0;
    }
  }
  return out;
}

}  // namespace

AugmentOptions AugmentOptions::disabled() {
  AugmentOptions o;
  o.p_shift = o.p_blur = o.p_gamma = o.p_contrast = o.p_affine = 0.0;
  return o;
}

GrayImage augment(const GrayImage& image, std::uint64_t seed, const AugmentOptions& options) {
  Rng rng(seed);
  GrayImage img = image;
  if (img.pixels.empty()) return img;
  const bool do_affine = rng.bernoulli(options.p_affine);
  const double shear = rng.uniform(-options.max_shear, options.max_shear);
  const double sx = rng.uniform(options.scale_lo, options.scale_hi);
  const double sy = rng.uniform(options.scale_lo, options.scale_hi);
  const bool do_shift = rng.bernoulli(options.p_shift);
  const std::uint64_t shift_seed = rng.below(1ULL << 62);
  const bool do_blur = rng.bernoulli(options.p_blur);
  const bool do_gamma = rng.bernoulli(options.p_gamma);
  const double gamma = rng.uniform(options.gamma_lo, options.gamma_hi);
  const bool do_contrast = rng.bernoulli(options.p_contrast);
  const double contrast = rng.uniform(options.contrast_lo, options.contrast_hi);

  if (do_affine) img = affine(img, shear, sx, sy);
  if (do_shift) {
    const InkBox box = ink_box(img);
    if (box.x0 <= box.x1) {
      Rng srng(shift_seed);
      const long dx = pick_offset(srng, img.width, options.max_shift, box.x0,
                                  static_cast<long>(img.width) - 1 - box.x1);
      const long dy = pick_offset(srng, img.height, options.max_shift, box.y0,
                                  static_cast<long>(img.height) - 1 - box.y1);
      img = shift(img, dx, dy);
    }
  }
  if (do_blur) img = box_blur(img);
  if (do_gamma) {
    for (double& v : img.pixels) v = std::pow(std::clamp(v, 0.0, 1.0), gamma);
  }
  if (do_contrast) {
    double mean = 0;
    for (double v : img.pixels) mean += v;
    mean /= static_cast<double>(img.pixels.size());
    for (double& v : img.pixels) v = (v - mean) * contrast + mean;
  }
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace htr
