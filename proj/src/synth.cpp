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
#include "htr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "htr/params.hpp"
#include "htr/utf8.hpp"

namespace htr {

namespace {

constexpr std::uint64_t kGlyphSeed = 0x5eedf00dULL;

std::uint64_t split_stream(const std::string& split) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : split) h = (h ^ c) * 1099511628211ULL;
  return h;
}

// Lattice points on a 4x4 grid inside the unit box.
double lattice(std::size_t i) { return 0.1 + 0.8 * static_cast<double>(i) / 3.0; }

std::vector<int> rasterize_key(const Glyph& g) {
  // 8x8 occupancy used to reject glyphs too similar to earlier ones.
  std::vector<int> cells(64, 0);
  for (const Stroke& s : g) {
    for (int k = 0; k <= 32; ++k) {
      const double t = k / 32.0;
      const double x = s.x0 + t * (s.x1 - s.x0);
      const double y = s.y0 + t * (s.y1 - s.y0);
      const int cx = std::clamp(static_cast<int>(x * 8), 0, 7);
      const int cy = std::clamp(static_cast<int>(y * 8), 0, 7);
      cells[cy * 8 + cx] = 1;
    }
  }
  return cells;
}

int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

double segment_distance(double px, double py, const Stroke& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = s.x0 + t * dx - px, ey = s.y0 + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

// Draws strokes given in pixel coordinates with radius `r` (max blend).
void draw(GrayImage& img, const std::vector<Stroke>& strokes, double r) {
  for (const Stroke& s : strokes) {
    const auto lo_x = static_cast<long>(std::floor(std::min(s.x0, s.x1) - r - 1));
    const auto hi_x = static_cast<long>(std::ceil(std::max(s.x0, s.x1) + r + 1));
    const auto lo_y = static_cast<long>(std::floor(std::min(s.y0, s.y1) - r - 1));
    const auto hi_y = static_cast<long>(std::ceil(std::max(s.y0, s.y1) + r + 1));
    for (long y = std::max(0L, lo_y); y <= std::min<long>(hi_y, static_cast<long>(img.height) - 1); ++y) {
      for (long x = std::max(0L, lo_x); x <= std::min<long>(hi_x, static_cast<long>(img.width) - 1); ++x) {
        const double d = segment_distance(x + 0.5, y + 0.5, s);
        const double v = std::clamp(r + 0.5 - d, 0.0, 1.0);
        double& px = img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
        px = std::max(px, v);
      }
    }
  }
}

}  // namespace

std::size_t SynthConfig::effective_glyph_width() const {
  return glyph_width != 0 ? glyph_width : std::max<std::size_t>(4, canvas_height * 5 / 8);
}

void SynthConfig::validate() const {
  if (symbols < 2) throw std::invalid_argument("synth: symbol set size K must be at least 2");
  if (symbols > split_utf8(alphabet).size()) {
    throw std::invalid_argument("synth: alphabet has fewer than K symbols");
  }
  if (min_chars < 1 || max_chars < min_chars) {
    throw std::invalid_argument("synth: invalid chars-per-line range");
  }
  if (min_gap > max_gap) throw std::invalid_argument("synth: min_gap exceeds max_gap");
  if (canvas_height < 8) {
    throw std::invalid_argument("synth: canvas height " + std::to_string(canvas_height) +
                                " too small for glyphs (minimum 8)");
  }
  if (effective_glyph_width() < 4) throw std::invalid_argument("synth: glyph width too small");
  if (jitter < 0 || jitter > 0.2) throw std::invalid_argument("synth: jitter must be in [0, 0.2]");
}

std::vector<Glyph> glyph_set(std::size_t symbols) {
  Rng rng(kGlyphSeed);
  std::vector<Glyph> glyphs;
  std::vector<std::vector<int>> keys;
  int min_distance = 10;
  std::size_t attempts = 0;
  while (glyphs.size() < symbols) {
    if (++attempts % 500 == 0 && min_distance > 1) --min_distance;
    Glyph g;
    const std::size_t n = 2 + rng.below(3);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t a = rng.below(16), b = rng.below(16);
      while (b == a) b = rng.below(16);
      g.push_back({lattice(a % 4), lattice(a / 4), lattice(b % 4), lattice(b / 4)});
    }
    auto key = rasterize_key(g);
    bool distinct = true;
    for (const auto& other : keys) {
      if (hamming(key, other) < min_distance) {
        distinct = false;
        break;
      }
    }
    if (!distinct) continue;
    keys.push_back(std::move(key));
    glyphs.push_back(std::move(g));
  }
  return glyphs;
}

Vocabulary synth_vocabulary(const SynthConfig& config) {
  config.validate();
  auto chars = split_utf8(config.alphabet);
  chars.resize(config.symbols);
  return Vocabulary(chars);
}

std::vector<SampleRecord> synth_generate(const SynthConfig& config, std::size_t count,
                                         const std::string& split) {
  config.validate();
  const auto glyphs = glyph_set(config.symbols);
  const auto chars = synth_vocabulary(config).symbols();
  const std::size_t h = config.canvas_height;
  const std::size_t gw = config.effective_glyph_width();
  const double gh = 0.7 * static_cast<double>(h);
  const double radius = std::max(0.75, static_cast<double>(h) / 24.0);
  const double unit = static_cast<double>(h) / 32.0;

  std::vector<SampleRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(mix_seed(config.seed, split_stream(split), i));
    const std::size_t n = config.min_chars + rng.below(config.max_chars - config.min_chars + 1);
    std::vector<std::size_t> classes(n);
    for (auto& c : classes) c = rng.below(config.symbols);

    std::vector<Stroke> strokes;
    double cursor = 4.0 * unit + rng.uniform(0.0, 4.0 * unit);
    for (std::size_t c : classes) {
      const double sx = static_cast<double>(gw) * rng.uniform(0.9, 1.0);
      const double sy = gh * rng.uniform(0.9, 1.0);
      const double top = (static_cast<double>(h) - sy) / 2.0 + rng.uniform(-1.5, 1.5) * unit;
      for (const Stroke& s : glyphs[c]) {
        auto jit = [&] { return rng.uniform(-config.jitter, config.jitter); };
        const double x0 = s.x0 + jit(), y0 = s.y0 + jit(), x1 = s.x1 + jit(), y1 = s.y1 + jit();
        strokes.push_back({cursor + x0 * sx, top + y0 * sy, cursor + x1 * sx, top + y1 * sy});
      }
      const double gap = static_cast<double>(config.min_gap) +
                         rng.uniform(0.0, static_cast<double>(config.max_gap - config.min_gap));
      cursor += static_cast<double>(gw) + gap * unit;
    }
    const double right = 4.0 * unit + rng.uniform(0.0, 4.0 * unit);
    const auto width = static_cast<std::size_t>(std::ceil(cursor + right));
    GrayImage img(width, h);
    draw(img, strokes, radius);

    SampleRecord rec;
    rec.image = std::move(img);
    for (std::size_t c : classes) rec.label += chars[c + 1];
    char id[64];
    std::snprintf(id, sizeof id, "%s_%05zu", split.c_str(), i);
    rec.id = id;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace htr
