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

// Non-local attention over the bottleneck map.
//
//   Q, K, V   = pool(relu(conv1x1(f5)))          n x n x D each
//   R         = rownorm_L1(Q* K*)                 M x M, rows sum to 1
//   w^g       = column means of R                 sums to 1
//   s         = R V*                              M x D
//   g         = flatten(pool(conv3x3(conv3x3(f5))))
//   g*        = (1 - alpha) g + alpha flatten(s)

#pragma once

#include <string>

#include "lnlatten/config.hpp"
#include "lnlatten/layers.hpp"
#include "lnlatten/layout.hpp"

namespace lnl {

template <typename T>
struct QKV {
  Var<T> qstar;  ///< M x D
  Var<T> kstar;  ///< D x M
  Var<T> vstar;  ///< M x D
};

template <typename T>
struct NonLocalOutputs {
  Var<T> r;       ///< M x M, empty when the variant has no non-local weights
  Var<T> wg;      ///< M
  Var<T> s;       ///< M x D
  Var<T> g;       ///< n*n*D
  Var<T> g_star;  ///< n*n*D
};

/// Pools an HWC map to an n x n grid: the 2x2/2 max pooling when
/// n == floor(H/2), otherwise max over an adaptive n x n window grid.
template <typename T>
Var<T> pool_to_grid(Graph<T>& g, const Var<T>& x, std::size_t n) {
  if (n == x.shape()[0] / 2 && n == x.shape()[1] / 2) return g.maxpool2d(x);
  return g.grid_maxpool(x, n);
}

/// R = row-wise L1 normalisation of |Q* K*|.
template <typename T>
Var<T> correlation(Graph<T>& g, const Var<T>& qstar, const Var<T>& kstar) {
  return g.row_l1_normalize(g.matmul(qstar, kstar));
}

template <typename T>
Var<T> weights_from_r(Graph<T>& g, const Var<T>& r) {
  return g.column_mean(r);
}

template <typename T>
Var<T> self_value(Graph<T>& g, const Var<T>& r, const Var<T>& vstar) {
  return g.matmul(r, vstar);
}

template <typename T>
Var<T> mix(Graph<T>& g, const Var<T>& gvec, const Var<T>& s, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must be in [0, 1], got " + std::to_string(alpha));
  }
  Var<T> flat = g.flatten(s);
  if (flat.size() != gvec.size()) {
    throw DimensionError("mix: flatten(s) has " + std::to_string(flat.size()) +
                         " elements but g has " + std::to_string(gvec.size()));
  }
  return g.lerp(gvec, flat, static_cast<T>(alpha));
}

template <typename T>
class NonLocalAttention {
 public:
  NonLocalAttention() = default;

  /// Q and K start from zero kernels with unit bias, so every entry of R is
  /// equal and w^g is uniform before the first update.
  NonLocalAttention(ParamStore<T>& store, const ModelConfig& cfg,
                    const Geometry& geom, Rng& rng)
      : grid_(geom.grid),
        bottleneck_(geom.bottleneck),
        channels_(cfg.widths.unet[4]),
        with_attention_(uses_nonlocal_weights(cfg.variant)) {
    const std::size_t d = channels_;
    if (with_attention_) {
      q_.w = store.add("nonlocal.q.w", Tensor<T>(Shape{1, 1, d, d}), true);
      q_.b = store.add("nonlocal.q.b", Tensor<T>(Shape{d}, T(1)), false);
      k_.w = store.add("nonlocal.k.w", Tensor<T>(Shape{1, 1, d, d}), true);
      k_.b = store.add("nonlocal.k.b", Tensor<T>(Shape{d}, T(1)), false);
      v_ = ConvLayer<T>(store, "nonlocal.v", 1, d, d, rng);
    }
    enc1_ = ConvLayer<T>(store, "global.conv1", 3, d, d, rng);
    enc2_ = ConvLayer<T>(store, "global.conv2", 3, d, d, rng);
  }

  bool with_attention() const { return with_attention_; }
  std::size_t grid() const { return grid_; }

  QKV<T> project_qkv(Graph<T>& g, const Var<T>& f5) const {
    check_input(f5);
    if (!with_attention_) {
      throw ContractError("project_qkv on a variant without non-local attention");
    }
    const std::size_t m = grid_ * grid_;
    auto branch = [&](const ConvLayer<T>& conv) {
      Var<T> p = pool_to_grid(g, conv.relu(g, f5), grid_);
      if (p.shape()[0] * p.shape()[1] != m) {
        throw ConfigError("pooled resolution does not match m = " + std::to_string(m));
      }
      return g.reshape(p, Shape{m, channels_});
    };
    QKV<T> out;
    out.qstar = branch(q_);
    out.kstar = g.transpose(branch(k_));
    out.vstar = branch(v_);
    return out;
  }

  Var<T> encode_global(Graph<T>& g, const Var<T>& f5) const {
    check_input(f5);
    Var<T> h = enc2_.relu(g, enc1_.relu(g, f5));
    return g.flatten(pool_to_grid(g, h, grid_));
  }

  NonLocalOutputs<T> forward(Graph<T>& g, const Var<T>& f5, double alpha) const {
    NonLocalOutputs<T> out;
    out.g = encode_global(g, f5);
    if (!with_attention_) {
      const std::size_t m = grid_ * grid_;
      out.wg = make_const(Tensor<T>(Shape{m}, T(1) / static_cast<T>(m)));
      out.g_star = out.g;
      return out;
    }
    QKV<T> qkv = project_qkv(g, f5);
    out.r = correlation(g, qkv.qstar, qkv.kstar);
    out.wg = weights_from_r(g, out.r);
    out.s = self_value(g, out.r, qkv.vstar);
    out.g_star = mix(g, out.g, out.s, alpha);
    return out;
  }

  const ConvLayer<T>& q() const { return q_; }
  const ConvLayer<T>& k() const { return k_; }
  const ConvLayer<T>& v() const { return v_; }

 private:
  void check_input(const Var<T>& f5) const {
    const auto& s = f5.shape();
    if (s.size() != 3 || s[0] != bottleneck_ || s[1] != bottleneck_ ||
        s[2] != channels_) {
      throw ConfigError("non-local attention expects a " +
                        std::to_string(bottleneck_) + "x" +
                        std::to_string(bottleneck_) + "x" +
                        std::to_string(channels_) + " map, got " + shape_str(s));
    }
  }

  std::size_t grid_ = 0;
  std::size_t bottleneck_ = 0;
  std::size_t channels_ = 0;
  bool with_attention_ = true;
  ConvLayer<T> q_, k_, v_;
  ConvLayer<T> enc1_, enc2_;
};

}  // namespace lnl
