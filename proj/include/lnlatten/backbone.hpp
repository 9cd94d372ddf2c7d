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

// U-Net feature extractor.
//
// Encoder: five double-3x3 stages separated by four 2x2/2 poolings
// (e.g. 144 -> 72 -> 36 -> 18 -> 9). Decoder: four stages of nearest 2x
// upsampling + 3x3 conv, concatenation with the matching encoder map, and a
// double 3x3 conv. f5 is the second conv of stage 5 (bottleneck), f9 the
// second conv of stage 9 (full resolution).

#pragma once

#include <array>
#include <string>

#include "lnlatten/config.hpp"
#include "lnlatten/layers.hpp"

namespace lnl {

template <typename T>
struct BackboneOutputs {
  Var<T> f5;
  Var<T> f9;
};

template <typename T>
class Backbone {
 public:
  Backbone() = default;

  Backbone(ParamStore<T>& store, const ModelConfig& cfg, Rng& rng)
      : extent_(cfg.image_extent), in_channels_(cfg.input_channels) {
    const auto& c = cfg.widths.unet;
    std::size_t cin = cfg.input_channels;
    for (std::size_t s = 0; s < 5; ++s) {
      const std::string name = "unet.conv" + std::to_string(s + 1);
      enc_[s][0] = ConvLayer<T>(store, name + "_1", 3, cin, c[s], rng);
      enc_[s][1] = ConvLayer<T>(store, name + "_2", 3, c[s], c[s], rng);
      cin = c[s];
    }
    for (std::size_t d = 0; d < 4; ++d) {
      const std::size_t skip = 3 - d;  // encoder stage feeding this decoder
      const std::size_t cout = c[skip];
      const std::string name = "unet.conv" + std::to_string(d + 6);
      up_[d] = ConvLayer<T>(store, name + "_up", 3, cin, cout, rng);
      dec_[d][0] = ConvLayer<T>(store, name + "_1", 3, 2 * cout, cout, rng);
      dec_[d][1] = ConvLayer<T>(store, name + "_2", 3, cout, cout, rng);
      cin = cout;
    }
  }

  /// `skips = false` replaces every skip map by zeros (diagnostic only).
  BackboneOutputs<T> forward(Graph<T>& g, const Var<T>& image,
                             bool skips = true) const {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] != extent_ || s[1] != extent_ ||
        s[2] != in_channels_) {
      throw ConfigError("backbone expects a " + std::to_string(extent_) + "x" +
                        std::to_string(extent_) + "x" +
                        std::to_string(in_channels_) + " image, got " +
                        shape_str(s));
    }
    std::array<Var<T>, 4> skip_maps;
    Var<T> x = image;
    for (std::size_t st = 0; st < 5; ++st) {
      if (st > 0) x = g.maxpool2d(x);
      x = enc_[st][1].relu(g, enc_[st][0].relu(g, x));
      if (st < 4) skip_maps[st] = x;
    }
    BackboneOutputs<T> out;
    out.f5 = x;
    for (std::size_t d = 0; d < 4; ++d) {
      Var<T> up = up_[d].relu(g, g.upsample2x(x));
      Var<T> skip = skip_maps[3 - d];
      if (!skips) skip = make_const(Tensor<T>(skip.shape()));
      Var<T> cat = g.concat({skip, up}, 2);
      x = dec_[d][1].relu(g, dec_[d][0].relu(g, cat));
    }
    out.f9 = x;
    return out;
  }

 private:
  std::size_t extent_ = 0;
  std::size_t in_channels_ = 0;
  std::array<std::array<ConvLayer<T>, 2>, 5> enc_;
  std::array<ConvLayer<T>, 4> up_;
  std::array<std::array<ConvLayer<T>, 2>, 4> dec_;
};

}  // namespace lnl
