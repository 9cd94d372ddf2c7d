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

#include <gtest/gtest.h>

#include <limits>

#include "lnlatten/synth.hpp"

namespace lnl {
namespace {

bool inside(const CellBox& b, std::size_t y, std::size_t x) {
  return y >= b.y0 && y < b.y0 + b.size && x >= b.x0 && x < b.x0 + b.size;
}

TEST(Synth, SameSeedSameData) {
  SynthOptions o;
  o.samples_per_class = 5;
  auto a = synth_dataset(o);
  auto b = synth_dataset(o);
  EXPECT_EQ(a.train.images, b.train.images);
  EXPECT_EQ(a.test.images, b.test.images);
  EXPECT_EQ(a.train.labels, b.train.labels);
  o.seed = 2;
  EXPECT_NE(synth_dataset(o).train.images, a.train.images);
}

TEST(Synth, SplitSizesAndMetadata) {
  SynthOptions o;
  o.samples_per_class = 10;
  o.test_fraction = 0.2;
  auto s = synth_dataset(o);
  EXPECT_EQ(s.train.size(), 24u);
  EXPECT_EQ(s.test.size(), 6u);
  EXPECT_EQ(s.train.class_counts(), (std::vector<std::size_t>{8, 8, 8}));
  EXPECT_EQ(s.train.planted_cells, planted_cells_for(2));
  EXPECT_EQ(s.train.cell_grid, 2u);
  EXPECT_NO_THROW(s.train.validate(80, 1));
}

TEST(Synth, PlantedCellsDefault) {
  EXPECT_EQ(planted_cells_for(2), (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(planted_cells_for(4), (std::vector<std::size_t>{0, 10, 15}));
  EXPECT_THROW(planted_cells_for(1), ConfigError);
}

TEST(Synth, GlyphBoxesAvoidOverlapStrips) {
  auto l = plan_patches(80, 4, 1.0 / 3.0);
  for (std::size_t cell = 0; cell < 4; ++cell) {
    auto b = glyph_box(l, cell, 16);
    EXPECT_EQ(b.size, 16u);
    for (std::size_t other = 0; other < 4; ++other) {
      if (other == cell) continue;
      const std::size_t oy = l.origin(other / 2), ox = l.origin(other % 2);
      const bool ylap = b.y0 < oy + l.patch_size && oy < b.y0 + b.size;
      const bool xlap = b.x0 < ox + l.patch_size && ox < b.x0 + b.size;
      EXPECT_FALSE(ylap && xlap) << cell << " vs " << other;
    }
  }
}

TEST(Synth, ClassesDifferOnlyInPlantedCells) {
  SynthOptions o;
  o.noise = 0.0;
  o.distractors = false;
  o.samples_per_class = 1;
  o.test_fraction = 0.0;
  o.class_count = 2;
  auto s = synth_dataset(o);
  auto l = plan_patches(80, 4, 1.0 / 3.0);
  std::vector<CellBox> boxes;
  for (auto c : s.train.planted_cells) boxes.push_back(glyph_box(l, c, o.glyph_size));
  const auto& a = s.train.images[0].pixels;
  const auto& b = s.train.images[1].pixels;
  std::size_t differ = 0;
  for (std::size_t y = 0; y < 80; ++y) {
    for (std::size_t x = 0; x < 80; ++x) {
      bool planted = false;
      for (const auto& bx : boxes) planted = planted || inside(bx, y, x);
      if (a[y * 80 + x] != b[y * 80 + x]) {
        EXPECT_TRUE(planted) << y << "," << x;
        ++differ;
      }
    }
  }
  EXPECT_GT(differ, 0u);
}

TEST(Synth, PlantedPixelsSeparateClasses) {
  SynthOptions o;
  o.samples_per_class = 60;
  o.test_fraction = 0.5;
  o.noise = 0.25;
  auto s = synth_dataset(o);
  auto l = plan_patches(80, 4, 1.0 / 3.0);
  std::vector<std::size_t> idx;
  for (auto c : s.train.planted_cells) {
    auto b = glyph_box(l, c, o.glyph_size);
    for (std::size_t y = b.y0; y < b.y0 + b.size; ++y)
      for (std::size_t x = b.x0; x < b.x0 + b.size; ++x) idx.push_back(y * 80 + x);
  }
  const std::size_t k = s.train.class_count();
  std::vector<std::vector<double>> centroid(k, std::vector<double>(idx.size(), 0.0));
  auto counts = s.train.class_counts();
  for (std::size_t i = 0; i < s.train.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j)
      centroid[s.train.labels[i]][j] += s.train.images[i].pixels[idx[j]] / static_cast<double>(counts[s.train.labels[i]]);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < s.test.size(); ++i) {
    double best = std::numeric_limits<double>::max();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double d = 0;
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const double e = s.test.images[i].pixels[idx[j]] - centroid[c][j];
        d += e * e;
      }
      if (d < best) best = d, arg = c;
    }
    correct += arg == s.test.labels[i];
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(s.test.size()), 0.95);
}

TEST(Synth, Rejections) {
  SynthOptions o;
  o.class_count = 1;
  EXPECT_THROW(synth_dataset(o), ConfigError);
  o = {};
  o.planted = {7};
  EXPECT_THROW(synth_dataset(o), ConfigError);
  o = {};
  o.channels = 2;
  EXPECT_THROW(synth_dataset(o), ConfigError);
  o = {};
  o.test_fraction = 1.0;
  EXPECT_THROW(synth_dataset(o), ConfigError);
}

}  // namespace
}  // namespace lnl
