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

// Patch planning and the derived shape chain of a model configuration.

#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "lnlatten/config.hpp"
#include "lnlatten/errors.hpp"

namespace lnl {

/// Square grid of n x n equally sized, equally spaced patches.
/// Invariant: (n-1)*stride + patch_size == image extent.
struct PatchLayout {
  std::size_t m = 1;
  std::size_t n = 1;
  std::size_t patch_size = 0;
  std::size_t stride = 0;
  std::size_t overlap = 0;

  /// Top-left pixel offset of grid row/column `i`.
  std::size_t origin(std::size_t i) const { return i * stride; }

  double overlap_ratio() const {
    return static_cast<double>(overlap) / static_cast<double>(patch_size);
  }

  /// n * P - (n - 1) * overlap, which must reproduce the image extent.
  std::size_t covered_extent() const { return n * patch_size - (n - 1) * overlap; }

  friend bool operator==(const PatchLayout&, const PatchLayout&) = default;
};

inline std::size_t exact_sqrt(std::size_t m) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(m))));
  if (m == 0 || r * r != m) {
    throw ConfigError("patch count m = " + std::to_string(m) +
                      " is not a positive perfect square");
  }
  return r;
}

namespace detail {

inline PatchLayout layout_from_size(std::size_t extent, std::size_t n,
                                    std::size_t p) {
  PatchLayout l;
  l.n = n;
  l.m = n * n;
  l.patch_size = p;
  l.stride = n == 1 ? p : (extent - p) / (n - 1);
  l.overlap = p - l.stride;
  return l;
}

inline bool feasible_size(std::size_t extent, std::size_t n, std::size_t p) {
  if (p == 0 || p > extent) return false;
  if (n == 1) return p == extent;
  if ((extent - p) % (n - 1) != 0) return false;
  std::size_t stride = (extent - p) / (n - 1);
  return stride > 0 && stride <= p;
}

}  // namespace detail

/// Solves n*P - (n-1)*ratio*P = extent for P, rounding P to the nearest
/// integer; the stride recomputed from P must be integral.
inline PatchLayout plan_patches(std::size_t extent, std::size_t m,
                                double overlap_ratio) {
  const std::size_t n = exact_sqrt(m);
  if (!(overlap_ratio >= 0.0 && overlap_ratio < 1.0)) {
    throw ConfigError("overlap_ratio must be in [0, 1), got " +
                      std::to_string(overlap_ratio));
  }
  if (n == 1) return detail::layout_from_size(extent, 1, extent);
  const double denom = static_cast<double>(n) - static_cast<double>(n - 1) * overlap_ratio;
  const auto p = static_cast<std::size_t>(std::llround(static_cast<double>(extent) / denom));
  if (detail::feasible_size(extent, n, p)) return detail::layout_from_size(extent, n, p);

  std::ostringstream msg;
  msg << "no integral patch layout for extent " << extent << ", m = " << m
      << ", overlap_ratio = " << overlap_ratio << " (patch size " << p
      << " gives a fractional stride); nearest feasible ratios:";
  int found = 0;
  for (std::size_t d = 1; d < extent && found < 4; ++d) {
    for (long cand : {static_cast<long>(p) - static_cast<long>(d),
                      static_cast<long>(p) + static_cast<long>(d)}) {
      if (cand <= 0 || found >= 4) continue;
      auto c = static_cast<std::size_t>(cand);
      if (!detail::feasible_size(extent, n, c)) continue;
      auto l = detail::layout_from_size(extent, n, c);
      msg << ' ' << l.overlap_ratio() << " (patch " << l.patch_size << ", overlap "
          << l.overlap << ")";
      ++found;
    }
  }
  throw ConfigError(msg.str());
}

/// Layout with a fixed overlap in pixels: P = (extent + (n-1)*overlap) / n.
inline PatchLayout plan_patches_by_overlap(std::size_t extent, std::size_t m,
                                           std::size_t overlap) {
  const std::size_t n = exact_sqrt(m);
  if (n == 1) {
    if (overlap != 0) throw ConfigError("a single patch cannot overlap");
    return detail::layout_from_size(extent, 1, extent);
  }
  std::size_t total = extent + (n - 1) * overlap;
  if (total % n != 0) {
    throw ConfigError("overlap of " + std::to_string(overlap) +
                      " pixels gives a fractional patch size for extent " +
                      std::to_string(extent) + " and m = " + std::to_string(m));
  }
  std::size_t p = total / n;
  if (!detail::feasible_size(extent, n, p)) {
    throw ConfigError("overlap of " + std::to_string(overlap) +
                      " pixels leaves no positive stride");
  }
  return detail::layout_from_size(extent, n, p);
}

/// Every extent in the model, derived from a configuration.
struct Geometry {
  std::size_t image_extent = 0;
  std::size_t bottleneck = 0;  ///< spatial extent of f5
  std::size_t grid = 0;        ///< n, with m = n * n
  bool table_pooling = true;   ///< n == floor(bottleneck / 2): 2x2/2 pooling
  PatchLayout layout;
  std::vector<std::size_t> simple_chain;  ///< patch extent after each pooling
  std::size_t gate_mid = 0;   ///< after the first unpadded 3x3
  std::size_t gate_out = 0;   ///< after the second unpadded 3x3
  std::size_t gate_flat = 0;  ///< flattened gate features
  std::size_t local_dim = 0;  ///< length of each f_i and of f_en
  std::size_t global_dim = 0; ///< length of g and g*
  std::size_t fused_dim = 0;  ///< fc1 input width
};

inline Geometry derive_geometry(const ModelConfig& c) {
  Geometry g;
  if (c.image_extent < 16 || c.image_extent % 16 != 0) {
    throw ConfigError("image_extent must be a positive multiple of 16, got " +
                      std::to_string(c.image_extent));
  }
  if (c.input_channels != 1 && c.input_channels != 3) {
    throw ConfigError("input_channels must be 1 or 3, got " +
                      std::to_string(c.input_channels));
  }
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) {
    throw ConfigError("alpha must be in [0, 1], got " + std::to_string(c.alpha));
  }
  if (c.class_count < 2) throw ConfigError("class_count must be >= 2");
  if (!(c.loss_balance >= 0.0) || !(c.l2_lambda >= 0.0)) {
    throw ConfigError("loss_balance and l2_lambda must be >= 0");
  }
  g.image_extent = c.image_extent;
  g.bottleneck = c.image_extent / 16;
  g.grid = exact_sqrt(c.m);
  if (g.grid > g.bottleneck) {
    throw ConfigError("m = " + std::to_string(c.m) + " needs a " +
                      std::to_string(g.grid) + "x" + std::to_string(g.grid) +
                      " grid but the bottleneck map is only " +
                      std::to_string(g.bottleneck) + "x" +
                      std::to_string(g.bottleneck));
  }
  g.table_pooling = g.grid == g.bottleneck / 2;
  g.layout = c.overlap_pixels
                 ? plan_patches_by_overlap(c.image_extent, c.m, *c.overlap_pixels)
                 : plan_patches(c.image_extent, c.m, c.overlap_ratio);

  std::size_t s = g.layout.patch_size;
  for (int i = 0; i < 3; ++i) {
    if (s < 2) {
      throw ConfigError("patch size " + std::to_string(g.layout.patch_size) +
                        " is too small for three 2x2 poolings");
    }
    s /= 2;
    g.simple_chain.push_back(s);
  }
  const auto& w = c.widths;
  g.local_dim = s * s * w.simple[2];
  if (uses_local_gates(c.variant)) {
    if (s < 5) {
      throw ConfigError("patch size " + std::to_string(g.layout.patch_size) +
                        " leaves a " + std::to_string(s) + "x" + std::to_string(s) +
                        " SimpleNet output; local attention needs at least 5x5");
    }
    g.gate_mid = s - 2;
    g.gate_out = g.gate_mid - 2;
    g.gate_flat = g.gate_out * g.gate_out * w.gate[2];
  }
  g.global_dim = g.grid * g.grid * w.unet[4];
  g.fused_dim = g.global_dim + g.local_dim;
  return g;
}

}  // namespace lnl
