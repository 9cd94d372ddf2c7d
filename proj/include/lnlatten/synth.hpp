/* Copyright 2026 The LNLAttenNet Authors. All Rights Reserved.

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

// Planted-glyph dataset. The image is divided into the cells of an n x n
// patch layout; class identity lives only in a few designated cells, every
// other cell carries a fresh random glyph of the same style.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lnlatten/dataset.hpp"
#include "lnlatten/layout.hpp"

namespace lnl {

struct SynthOptions {
  std::size_t class_count = 3;
  std::size_t samples_per_class = 300;
  std::size_t extent = 80;
  std::size_t channels = 1;
  std::size_t cell_grid = 2;
  std::size_t glyph_bits = 4;   ///< glyph is a glyph_bits x glyph_bits binary pattern
  std::size_t glyph_size = 16;  ///< pixels per glyph side
  double background = 0.2;
  double foreground = 0.9;
  double noise = 0.08;          ///< Gaussian pixel noise sigma
  bool distractors = true;      ///< glyphs in non-planted cells
  /// Distractor glyphs are class glyphs of a random class instead of random
  /// bit patterns, so they look like evidence but carry none.
  bool decoys = false;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
  /// Overrides the default planted cells when non-empty.
  std::vector<std::size_t> planted;
};

struct SynthSplit {
  Dataset train;
  Dataset test;
  /// glyphs[c][k]: bit pattern of class c in planted cell k.
  std::vector<std::vector<std::vector<std::uint8_t>>> glyphs;
};

/// Square pixel region [y0, y0 + size) x [x0, x0 + size).
struct CellBox {
  std::size_t y0 = 0, x0 = 0, size = 0;
};

/// Interval of grid position i covered by no other patch.
inline std::pair<std::size_t, std::size_t> exclusive_span(const PatchLayout& l, std::size_t i) {
  std::size_t lo = l.origin(i) + (i > 0 ? l.overlap : 0);
  std::size_t hi = l.origin(i) + l.patch_size - (i + 1 < l.n ? l.overlap : 0);
  return {lo, hi};
}

/// Part of the exclusive span that also lies in [origin, origin + stride),
/// the block a 2x2-pooled bottleneck cell sees. Falls back to the whole
/// exclusive span when the two do not meet.
inline std::pair<std::size_t, std::size_t> glyph_span(const PatchLayout& l, std::size_t i) {
  auto [lo, hi] = exclusive_span(l, i);
  const std::size_t blo = l.origin(i), bhi = l.origin(i) + l.stride;
  const std::size_t a = std::max(lo, blo), b = std::min(hi, bhi);
  if (a < b) return {a, b};
  return {lo, hi};
}

/// Glyph box centred in the glyph span of a cell.
inline CellBox glyph_box(const PatchLayout& l, std::size_t cell, std::size_t glyph) {
  const std::size_t r = cell / l.n, c = cell % l.n;
  auto [ry0, ry1] = glyph_span(l, r);
  auto [cx0, cx1] = glyph_span(l, c);
  const std::size_t room = std::min(ry1 - ry0, cx1 - cx0);
  if (room == 0) throw ConfigError("patch layout leaves no exclusive area for glyphs");
  CellBox b;
  b.size = std::min(glyph, room);
  b.y0 = ry0 + (ry1 - ry0 - b.size) / 2;
  b.x0 = cx0 + (cx1 - cx0 - b.size) / 2;
  return b;
}

/// Two planted cells on the main diagonal ends; a third at the centre of the
/// diagonal once the grid has at least 3 rows.
inline std::vector<std::size_t> planted_cells_for(std::size_t n) {
  if (n < 2) throw ConfigError("planted-glyph data needs a cell grid of at least 2");
  std::vector<std::size_t> cells{0, n * n - 1};
  if (n >= 3) cells.push_back((n / 2) * (n + 1));
  std::sort(cells.begin(), cells.end());
  return cells;
}

namespace detail {

inline std::vector<std::uint8_t> random_bits(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::uint8_t> bits(n);
  std::bernoulli_distribution coin(0.5);
  for (auto& b : bits) b = coin(rng) ? 1 : 0;
  return bits;
}

inline std::size_t hamming(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

inline void stamp(std::vector<double>& canvas, std::size_t extent, const CellBox& box,
                  const std::vector<std::uint8_t>& bits, std::size_t side, double on, double off) {
  for (std::size_t y = 0; y < box.size; ++y) {
    for (std::size_t x = 0; x < box.size; ++x) {
      const std::size_t by = y * side / box.size, bx = x * side / box.size;
      canvas[(box.y0 + y) * extent + box.x0 + x] = bits[by * side + bx] ? on : off;
    }
  }
}

}  // namespace detail

inline SynthSplit synth_dataset(const SynthOptions& o) {
  if (o.class_count < 2) throw ConfigError("class_count must be >= 2");
  if (o.samples_per_class == 0) throw ConfigError("samples_per_class must be >= 1");
  if (o.channels != 1 && o.channels != 3) throw ConfigError("channels must be 1 or 3");
  if (!(o.test_fraction >= 0.0 && o.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must be in [0, 1)");
  }
  const PatchLayout layout = plan_patches(o.extent, o.cell_grid * o.cell_grid, 1.0 / 3.0);
  std::vector<std::size_t> cells = o.planted.empty() ? planted_cells_for(o.cell_grid) : o.planted;
  std::sort(cells.begin(), cells.end());
  for (auto c : cells)
    if (c >= layout.m) throw ConfigError("planted cell " + std::to_string(c) + " outside the grid");
  const std::size_t nbits = o.glyph_bits * o.glyph_bits;

  std::mt19937_64 rng(o.seed);
  SynthSplit out;
  // Class glyphs pairwise at least a quarter of the bits apart in every cell.
  out.glyphs.assign(o.class_count, {});
  for (std::size_t k = 0; k < cells.size(); ++k) {
    for (std::size_t c = 0; c < o.class_count; ++c) {
      std::vector<std::uint8_t> bits;
      for (int attempt = 0;; ++attempt) {
        bits = detail::random_bits(nbits, rng);
        bool ok = true;
        for (std::size_t p = 0; p < c && ok; ++p)
          ok = detail::hamming(bits, out.glyphs[p][k]) >= nbits / 4;
        if (ok) break;
        if (attempt > 10000) throw ConfigError("cannot find distinct glyphs; use more glyph bits");
      }
      out.glyphs[c].push_back(bits);
    }
  }

  std::vector<CellBox> boxes;
  for (std::size_t cell = 0; cell < layout.m; ++cell)
    boxes.push_back(glyph_box(layout, cell, o.glyph_size));

  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n_test =
      static_cast<std::size_t>(std::llround(o.test_fraction * static_cast<double>(o.samples_per_class)));
  for (Dataset* d : {&out.train, &out.test}) {
    d->extent = o.extent;
    d->channels = o.channels;
    d->planted_cells = cells;
    d->cell_grid = o.cell_grid;
    for (std::size_t c = 0; c < o.class_count; ++c) d->class_names.push_back("class" + std::to_string(c));
  }

  for (std::size_t s = 0; s < o.samples_per_class; ++s) {
    for (std::size_t c = 0; c < o.class_count; ++c) {
      std::vector<double> canvas(o.extent * o.extent, o.background);
      std::size_t k = 0;
      for (std::size_t cell = 0; cell < layout.m; ++cell) {
        const bool planted = std::find(cells.begin(), cells.end(), cell) != cells.end();
        if (planted) {
          detail::stamp(canvas, o.extent, boxes[cell], out.glyphs[c][k++], o.glyph_bits,
                        o.foreground, o.background);
        } else if (o.distractors) {
          std::vector<std::uint8_t> bits;
          if (o.decoys) {
            std::uniform_int_distribution<std::size_t> pick_c(0, o.class_count - 1);
            std::uniform_int_distribution<std::size_t> pick_k(0, cells.size() - 1);
            const std::size_t dc = pick_c(rng);
            bits = out.glyphs[dc][pick_k(rng)];
          } else {
            bits = detail::random_bits(nbits, rng);
          }
          detail::stamp(canvas, o.extent, boxes[cell], bits, o.glyph_bits, o.foreground,
                        o.background);
        }
      }
      Image8 img;
      img.height = img.width = o.extent;
      img.channels = o.channels;
      img.pixels.resize(o.extent * o.extent * o.channels);
      for (std::size_t i = 0; i < canvas.size(); ++i) {
        double v = canvas[i] + (o.noise > 0.0 ? o.noise * noise(rng) : 0.0);
        auto q = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        for (std::size_t ch = 0; ch < o.channels; ++ch) img.pixels[i * o.channels + ch] = q;
      }
      Dataset& dst = s < o.samples_per_class - n_test ? out.train : out.test;
      dst.images.push_back(std::move(img));
      dst.labels.push_back(c);
    }
  }
  return out;
}

}  // namespace lnl
