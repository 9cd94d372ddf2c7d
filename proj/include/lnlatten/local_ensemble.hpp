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

// Local multi-network ensemble: M overlapping crops of the decoder map, each
// through its own SimpleNet and sigmoid gate, combined as
//   f_en = sum_i w^g_i * w^l_i * f_i.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "lnlatten/config.hpp"
#include "lnlatten/layers.hpp"
#include "lnlatten/layout.hpp"

namespace lnl {

template <typename T>
struct LocalOutputs {
  std::vector<Var<T>> features;  ///< pre-gate f_i, flattened
  std::vector<Var<T>> gates;     ///< w^l_i, shape {1}
  Var<T> f_en;
};

/// Crops patch (row, col) of the layout from an HWC map.
template <typename T>
Var<T> crop_patch(Graph<T>& g, const Var<T>& map, const PatchLayout& layout,
                  std::size_t row, std::size_t col) {
  return g.crop(map, layout.origin(row), layout.origin(col), layout.patch_size,
                layout.patch_size);
}

/// All M patches in row-major grid order.
template <typename T>
std::vector<Var<T>> crop(Graph<T>& g, const Var<T>& map, const PatchLayout& layout) {
  const auto& s = map.shape();
  if (s.size() != 3 || s[0] != layout.covered_extent() || s[1] != layout.covered_extent()) {
    throw DimensionError("patch layout covers " +
                         std::to_string(layout.covered_extent()) +
                         " pixels but the map is " + shape_str(s));
  }
  std::vector<Var<T>> out;
  out.reserve(layout.m);
  for (std::size_t r = 0; r < layout.n; ++r)
    for (std::size_t c = 0; c < layout.n; ++c) out.push_back(crop_patch(g, map, layout, r, c));
  return out;
}

/// f_en = sum_i wg[i] * gates[i] * features[i].
template <typename T>
Var<T> combine(Graph<T>& g, const std::vector<Var<T>>& features,
               const std::vector<Var<T>>& gates, const Var<T>& wg) {
  const std::size_t m = features.size();
  if (m == 0 || gates.size() != m || wg.size() != m) {
    throw DimensionError("combine: " + std::to_string(m) + " features, " +
                         std::to_string(gates.size()) + " gates, " +
                         std::to_string(wg.size()) + " weights");
  }
  const std::size_t d = features[0].size();
  std::vector<Var<T>> rows;
  rows.reserve(m);
  for (const auto& f : features) {
    if (f.size() != d) throw DimensionError("combine: feature lengths differ");
    rows.push_back(g.reshape(f, Shape{1, d}));
  }
  Var<T> coef = g.mul(g.reshape(wg, Shape{m}), g.concat(gates, 0));
  Var<T> fen = g.matmul(g.reshape(coef, Shape{1, m}), g.concat(rows, 0));
  return g.reshape(fen, Shape{d});
}

/// One individual network: SimpleNet plus (optionally) its local gate.
template <typename T>
class LocalBranch {
 public:
  LocalBranch() = default;

  LocalBranch(ParamStore<T>& store, const std::string& prefix,
              std::size_t in_channels, const Widths& w, const Geometry& geom,
              bool with_gate, Rng& rng)
      : with_gate_(with_gate) {
    std::size_t cin = in_channels;
    for (std::size_t b = 0; b < 3; ++b) {
      const std::string name = prefix + ".simple.conv" + std::to_string(b + 1);
      simple_[b][0] = ConvLayer<T>(store, name + "_1", 3, cin, w.simple[b], rng);
      simple_[b][1] = ConvLayer<T>(store, name + "_2", 3, w.simple[b], w.simple[b], rng);
      cin = w.simple[b];
    }
    if (with_gate_) {
      const std::string name = prefix + ".gate";
      gate_[0] = ConvLayer<T>(store, name + ".conv1", 3, cin, w.gate[0], rng, Padding::kNone);
      gate_[1] = ConvLayer<T>(store, name + ".conv2", 1, w.gate[0], w.gate[1], rng);
      gate_[2] = ConvLayer<T>(store, name + ".conv3", 3, w.gate[1], w.gate[1], rng, Padding::kNone);
      gate_[3] = ConvLayer<T>(store, name + ".conv4", 1, w.gate[1], w.gate[2], rng);
      fc1_ = DenseLayer<T>(store, name + ".fc1", geom.gate_flat, w.gate_fc, rng);
      fc2_ = DenseLayer<T>(store, name + ".fc2", w.gate_fc, 1, rng);
    }
  }

  bool with_gate() const { return with_gate_; }

  /// Three (conv3x3, conv3x3, maxpool 2x2/2) blocks with ReLU.
  Var<T> simple_net_forward(Graph<T>& g, const Var<T>& patch) const {
    Var<T> x = patch;
    for (const auto& block : simple_) {
      x = block[1].relu(g, block[0].relu(g, x));
      x = g.maxpool2d(x);
    }
    return x;
  }

  /// Sigmoid gate from the SimpleNet output; shape {1}.
  Var<T> local_gate(Graph<T>& g, const Var<T>& pooled) const {
    if (!with_gate_) throw ContractError("local_gate on a branch without a gate");
    Var<T> x = pooled;
    for (const auto& conv : gate_) x = conv.relu(g, x);
    return g.sigmoid(fc2_(g, fc1_(g, g.flatten(x))));
  }

 private:
  bool with_gate_ = true;
  std::array<std::array<ConvLayer<T>, 2>, 3> simple_;
  std::array<ConvLayer<T>, 4> gate_;
  DenseLayer<T> fc1_, fc2_;
};

template <typename T>
class LocalEnsemble {
 public:
  LocalEnsemble() = default;

  LocalEnsemble(ParamStore<T>& store, const ModelConfig& cfg, const Geometry& geom,
                Rng& rng)
      : layout_(geom.layout), with_gates_(uses_local_gates(cfg.variant)) {
    const std::size_t cin = cfg.bypass_backbone ? cfg.input_channels : cfg.widths.unet[0];
    branches_.reserve(layout_.m);
    for (std::size_t i = 0; i < layout_.m; ++i) {
      branches_.emplace_back(store, "local" + std::to_string(i), cin, cfg.widths,
                             geom, with_gates_, rng);
    }
  }

  const PatchLayout& layout() const { return layout_; }
  const LocalBranch<T>& branch(std::size_t i) const { return branches_.at(i); }
  std::size_t size() const { return branches_.size(); }

  /// Runs every branch and combines with the given non-local weights.
  LocalOutputs<T> forward(Graph<T>& g, const Var<T>& map, const Var<T>& wg) const {
    std::vector<Var<T>> patches = crop(g, map, layout_);
    LocalOutputs<T> out;
    out.features.reserve(patches.size());
    out.gates.reserve(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
      Var<T> pooled = branches_[i].simple_net_forward(g, patches[i]);
      out.features.push_back(g.flatten(pooled));
      out.gates.push_back(with_gates_ ? branches_[i].local_gate(g, pooled)
                                      : make_const(Tensor<T>::scalar(T(1))));
    }
    out.f_en = combine(g, out.features, out.gates, wg);
    return out;
  }

 private:
  PatchLayout layout_;
  bool with_gates_ = true;
  std::vector<LocalBranch<T>> branches_;
};

}  // namespace lnl
