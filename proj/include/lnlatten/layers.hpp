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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lnlatten/graph.hpp"

namespace lnl {

using Rng = std::mt19937_64;

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
  /// Weight matrices and kernels enter the l2 term; biases do not.
  bool is_weight;
};

/// Ordered, named parameter registry. Order is creation order and is the
/// order used by checkpoints and optimizers.
template <typename T>
class ParamStore {
 public:
  Var<T> add(std::string name, Tensor<T> init, bool is_weight) {
    for (const auto& p : params_) {
      if (p.name == name) throw ContractError("duplicate parameter " + name);
    }
    Var<T> v = make_param(std::move(init));
    params_.push_back({std::move(name), v, is_weight});
    return v;
  }

  const std::vector<NamedParam<T>>& all() const { return params_; }
  std::vector<NamedParam<T>>& all() { return params_; }

  const NamedParam<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

 private:
  std::vector<NamedParam<T>> params_;
};

/// Gain for layers followed by a ReLU.
inline const double kReluGain = std::sqrt(2.0);

/// Uniform Xavier initialisation with the given fans and gain.
template <typename T>
Tensor<T> xavier(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                 double gain = 1.0) {
  Tensor<T> t(std::move(shape));
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
struct ConvLayer {
  Var<T> w;
  Var<T> b;
  Padding padding = Padding::kSame;

  ConvLayer() = default;
  ConvLayer(ParamStore<T>& store, const std::string& name, std::size_t k,
            std::size_t cin, std::size_t cout, Rng& rng,
            Padding pad = Padding::kSame)
      : padding(pad) {
    w = store.add(name + ".w",
                  xavier<T>(Shape{k, k, cin, cout}, k * k * cin, k * k * cout, rng, kReluGain),
                  true);
    b = store.add(name + ".b", Tensor<T>(Shape{cout}), false);
  }

  Var<T> operator()(Graph<T>& g, const Var<T>& x) const {
    return g.conv2d(x, w, &b, 1, padding);
  }

  Var<T> relu(Graph<T>& g, const Var<T>& x) const { return g.relu((*this)(g, x)); }
};

template <typename T>
struct DenseLayer {
  Var<T> w;
  Var<T> b;

  DenseLayer() = default;
  DenseLayer(ParamStore<T>& store, const std::string& name, std::size_t in,
             std::size_t out, Rng& rng, double gain = 1.0) {
    w = store.add(name + ".w", xavier<T>(Shape{in, out}, in, out, rng, gain), true);
    b = store.add(name + ".b", Tensor<T>(Shape{out}), false);
  }

  Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return g.linear(x, w, &b); }
};

}  // namespace lnl
