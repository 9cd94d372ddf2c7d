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

#include "lnlatten/layout.hpp"

namespace lnl {
namespace {

void expect_consistent(const PatchLayout& l, std::size_t extent) {
  EXPECT_EQ(l.m, l.n * l.n);
  EXPECT_EQ(l.overlap, l.patch_size - l.stride);
  EXPECT_EQ(l.covered_extent(), extent);
  EXPECT_EQ((l.n - 1) * l.stride + l.patch_size, extent);
}

TEST(Layout, DefaultSixteenPatches) {
  auto l = plan_patches(144, 16, 1.0 / 3.0);
  EXPECT_EQ(l.patch_size, 48u);
  EXPECT_EQ(l.overlap, 16u);
  EXPECT_EQ(l.stride, 32u);
  expect_consistent(l, 144);
}

TEST(Layout, TilingWithoutOverlap) {
  auto l = plan_patches(144, 4, 0.0);
  EXPECT_EQ(l.patch_size, 72u);
  EXPECT_EQ(l.stride, 72u);
  EXPECT_EQ(l.overlap, 0u);
}

TEST(Layout, TinyProfile) {
  auto l = plan_patches(80, 4, 1.0 / 3.0);
  EXPECT_EQ(l.patch_size, 48u);
  EXPECT_EQ(l.stride, 32u);
  EXPECT_EQ(l.overlap, 16u);
}

TEST(Layout, OverlapSweepIsFeasible) {
  for (std::size_t ov : {4, 8, 12, 16, 20, 24}) {
    auto l = plan_patches_by_overlap(144, 16, ov);
    EXPECT_EQ(l.overlap, ov);
    expect_consistent(l, 144);
    // Substituting the ratio back must reproduce the same layout.
    EXPECT_EQ(plan_patches(144, 16, l.overlap_ratio()), l) << "overlap " << ov;
  }
}

TEST(Layout, InfeasibleRatioIsDiagnosed) {
  try {
    plan_patches(144, 16, 0.3);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("no integral patch layout"), std::string::npos) << msg;
    EXPECT_NE(msg.find("nearest feasible"), std::string::npos) << msg;
  }
  EXPECT_THROW(plan_patches(144, 16, 1.0), ConfigError);
  EXPECT_THROW(plan_patches_by_overlap(144, 16, 5), ConfigError);
}

TEST(Layout, PatchCountMustBeSquare) {
  EXPECT_THROW(plan_patches(144, 12, 1.0 / 3.0), ConfigError);
  EXPECT_THROW(exact_sqrt(0), ConfigError);
  EXPECT_EQ(exact_sqrt(36), 6u);
}

TEST(Layout, SinglePatchCoversImage) {
  auto l = plan_patches(80, 1, 0.25);
  EXPECT_EQ(l.patch_size, 80u);
  EXPECT_THROW(plan_patches_by_overlap(80, 1, 4), ConfigError);
}

TEST(Geometry, PaperShapes) {
  auto g = derive_geometry(ModelConfig::for_profile(Profile::kPaper));
  EXPECT_EQ(g.bottleneck, 9u);
  EXPECT_EQ(g.grid, 4u);
  EXPECT_TRUE(g.table_pooling);
  EXPECT_EQ(g.simple_chain, (std::vector<std::size_t>{24, 12, 6}));
  EXPECT_EQ(g.gate_mid, 4u);
  EXPECT_EQ(g.gate_out, 2u);
  EXPECT_EQ(g.gate_flat, 256u);
  EXPECT_EQ(g.global_dim, 8192u);
  EXPECT_EQ(g.local_dim, 9216u);
  EXPECT_EQ(g.fused_dim, 17408u);
}

TEST(Geometry, TinyShapes) {
  auto g = derive_geometry(ModelConfig::for_profile(Profile::kTiny));
  EXPECT_EQ(g.bottleneck, 5u);
  EXPECT_EQ(g.grid, 2u);
  EXPECT_TRUE(g.table_pooling);
  EXPECT_EQ(g.layout.patch_size, 48u);
  EXPECT_EQ(g.simple_chain, (std::vector<std::size_t>{24, 12, 6}));
  EXPECT_EQ(g.gate_out, 2u);
}

TEST(Geometry, RejectsBadConfigs) {
  auto c = ModelConfig::for_profile(Profile::kPaper);
  c.image_extent = 145;
  EXPECT_THROW(derive_geometry(c), ConfigError);
  c = ModelConfig::for_profile(Profile::kPaper);
  c.alpha = 1.5;
  EXPECT_THROW(derive_geometry(c), ConfigError);
  c = ModelConfig::for_profile(Profile::kTiny);
  c.m = 36;  // 6x6 grid on a 5x5 bottleneck
  EXPECT_THROW(derive_geometry(c), ConfigError);
}

TEST(Geometry, GatelessVariantsAcceptSmallPatches) {
  auto c = ModelConfig::for_profile(Profile::kTiny);
  c.m = 9;
  c.overlap_pixels = 2;  // patch 28 -> 3x3 SimpleNet output
  EXPECT_THROW(derive_geometry(c), ConfigError);
  c.variant = Variant::kModelNonLocal;
  EXPECT_NO_THROW(derive_geometry(c));
}

}  // namespace
}  // namespace lnl
