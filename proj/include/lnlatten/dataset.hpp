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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lnlatten/errors.hpp"
#include "lnlatten/tensor.hpp"

namespace lnl {

/// 8-bit raster in HWC order.
struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Image8&, const Image8&) = default;
};

/// Pixel values scaled to [0, 1].
template <typename T>
Tensor<T> to_tensor(const Image8& img) {
  Tensor<T> t(Shape{img.height, img.width, img.channels});
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    t[i] = static_cast<T>(img.pixels[i]) / static_cast<T>(255);
  return t;
}

/// Labelled images of one extent and channel count.
struct Dataset {
  std::size_t extent = 0;
  std::size_t channels = 1;
  std::vector<std::string> class_names;
  std::vector<Image8> images;
  std::vector<std::size_t> labels;
  /// Ground-truth crucial cells (row-major indices on a cell_grid x cell_grid
  /// grid); empty for datasets without planted content.
  std::vector<std::size_t> planted_cells;
  std::size_t cell_grid = 0;

  std::size_t size() const { return images.size(); }
  std::size_t class_count() const { return class_names.size(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> c(class_count(), 0);
    for (auto l : labels) ++c.at(l);
    return c;
  }

  /// Throws DataError unless every image matches the declared geometry and
  /// every class has at least one image.
  void validate(std::size_t want_extent, std::size_t want_channels) const {
    if (images.empty()) throw DataError("dataset is empty");
    if (labels.size() != images.size()) throw DataError("label count differs from image count");
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& im = images[i];
      if (im.height != want_extent || im.width != want_extent) {
        throw DataError("image " + std::to_string(i) + " is " + std::to_string(im.width) +
                        "x" + std::to_string(im.height) + ", expected " +
                        std::to_string(want_extent) + "x" + std::to_string(want_extent));
      }
      if (im.channels != want_channels) {
        throw DataError("image " + std::to_string(i) + " has " +
                        std::to_string(im.channels) + " channels, expected " +
                        std::to_string(want_channels));
      }
      if (labels[i] >= class_count()) {
        throw DataError("label " + std::to_string(labels[i]) + " out of range for " +
                        std::to_string(class_count()) + " classes");
      }
    }
    auto counts = class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (counts[c] == 0) throw DataError("class '" + class_names[c] + "' has no images");
  }
};

}  // namespace lnl
