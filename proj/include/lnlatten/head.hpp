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

#include <string>
#include <vector>

#include "lnlatten/config.hpp"
#include "lnlatten/layers.hpp"
#include "lnlatten/layout.hpp"

namespace lnl {

struct LossConfig {
  double loss_balance = 1.0;
  double l2_lambda = 1e-4;

  static LossConfig from(const ModelConfig& c) { return {c.loss_balance, c.l2_lambda}; }
};

/// concat(g*, f_en) -> fc -> relu -> fc -> relu -> fc -> softmax.
template <typename T>
class FusionHead {
 public:
  FusionHead() = default;

  FusionHead(ParamStore<T>& store, const ModelConfig& cfg, const Geometry& geom,
             Rng& rng)
      : global_dim_(geom.global_dim), local_dim_(geom.local_dim) {
    const auto& h = cfg.widths.fc_hidden;
    fc1_ = DenseLayer<T>(store, "head.fc1", geom.fused_dim, h[0], rng, kReluGain);
    fc2_ = DenseLayer<T>(store, "head.fc2", h[0], h[1], rng, kReluGain);
    fc3_ = DenseLayer<T>(store, "head.fc3", h[1], cfg.class_count, rng);
  }

  std::size_t fused_dim() const { return global_dim_ + local_dim_; }

  Var<T> logits(Graph<T>& g, const Var<T>& g_star, const Var<T>& f_en) const {
    if (g_star.size() != global_dim_ || f_en.size() != local_dim_) {
      throw ConfigError("fusion head expects " + std::to_string(global_dim_) +
                        " + " + std::to_string(local_dim_) + " features, got " +
                        std::to_string(g_star.size()) + " + " +
                        std::to_string(f_en.size()));
    }
    Var<T> fused = g.concat({g.flatten(g_star), g.flatten(f_en)}, 0);
    Var<T> h = g.relu(fc1_(g, fused));
    h = g.relu(fc2_(g, h));
    return fc3_(g, h);
  }

  Var<T> fuse_and_classify(Graph<T>& g, const Var<T>& g_star, const Var<T>& f_en) const {
    return g.softmax(logits(g, g_star, f_en));
  }

 private:
  std::size_t global_dim_ = 0;
  std::size_t local_dim_ = 0;
  DenseLayer<T> fc1_, fc2_, fc3_;
};

/// gamma * lambda * sum of squared weight entries (biases excluded).
template <typename T>
Var<T> l2_term(Graph<T>& g, const ParamStore<T>& params, const LossConfig& cfg) {
  std::vector<Var<T>> norms;
  for (const auto& p : params.all())
    if (p.is_weight) norms.push_back(g.squared_norm(p.var));
  if (norms.empty()) return make_const(Tensor<T>::scalar(T(0)));
  Var<T> total = g.sum(g.concat(norms, 0));
  return g.scale(total, static_cast<T>(cfg.loss_balance * cfg.l2_lambda));
}

template <typename T>
struct LossParts {
  Var<T> total;
  double entropy = 0.0;
  double l2 = 0.0;
  std::size_t clamped = 0;  ///< samples whose true-class probability hit the floor
};

/// Mean negative log-likelihood of the true class plus the l2 term.
template <typename T>
LossParts<T> batch_loss(Graph<T>& g, const std::vector<Var<T>>& probs,
                        const std::vector<std::size_t>& labels,
                        const ParamStore<T>& params, const LossConfig& cfg) {
  if (probs.empty() || probs.size() != labels.size()) {
    throw DimensionError("batch_loss: " + std::to_string(probs.size()) +
                         " predictions for " + std::to_string(labels.size()) + " labels");
  }
  LossParts<T> out;
  std::vector<Var<T>> terms;
  for (std::size_t n = 0; n < probs.size(); ++n) {
    bool clamped = false;
    terms.push_back(g.nll(probs[n], labels[n], T(1e-12), &clamped));
    out.clamped += clamped;
  }
  Var<T> entropy = g.scale(g.sum(g.concat(terms, 0)), T(1) / static_cast<T>(probs.size()));
  Var<T> l2 = l2_term(g, params, cfg);
  out.entropy = static_cast<double>(entropy.value().item());
  out.l2 = static_cast<double>(l2.value().item());
  out.total = g.add(entropy, l2);
  return out;
}

}  // namespace lnl
