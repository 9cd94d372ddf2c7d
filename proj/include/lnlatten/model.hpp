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

#include <vector>

#include "lnlatten/backbone.hpp"
#include "lnlatten/head.hpp"
#include "lnlatten/local_ensemble.hpp"
#include "lnlatten/nonlocal.hpp"

namespace lnl {

template <typename T>
struct ForwardResult {
  BackboneOutputs<T> backbone;
  NonLocalOutputs<T> nonlocal;
  LocalOutputs<T> local;
  Var<T> probs;

  std::vector<double> wg() const {
    std::vector<double> v;
    for (auto x : nonlocal.wg.value().vec()) v.push_back(static_cast<double>(x));
    return v;
  }

  std::vector<double> gates() const {
    std::vector<double> v;
    for (const auto& gvar : local.gates) v.push_back(static_cast<double>(gvar.value().item()));
    return v;
  }
};

/// Local/non-local joint attention network. Parameters are owned by the
/// model's ParamStore; sub-modules hold handles into it.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg), geom_(derive_geometry(cfg)) {
    Rng rng(cfg.seed);
    backbone_ = Backbone<T>(store_, cfg_, rng);
    nonlocal_ = NonLocalAttention<T>(store_, cfg_, geom_, rng);
    local_ = LocalEnsemble<T>(store_, cfg_, geom_, rng);
    head_ = FusionHead<T>(store_, cfg_, geom_, rng);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  const Geometry& geometry() const { return geom_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  const Backbone<T>& backbone() const { return backbone_; }
  const NonLocalAttention<T>& nonlocal() const { return nonlocal_; }
  const LocalEnsemble<T>& local() const { return local_; }
  const FusionHead<T>& head() const { return head_; }

  ForwardResult<T> forward(Graph<T>& g, const Var<T>& image) const {
    ForwardResult<T> r;
    r.backbone = backbone_.forward(g, image);
    r.nonlocal = nonlocal_.forward(g, r.backbone.f5, cfg_.alpha);
    const Var<T>& local_input = cfg_.bypass_backbone ? image : r.backbone.f9;
    r.local = local_.forward(g, local_input, r.nonlocal.wg);
    r.probs = head_.fuse_and_classify(g, r.nonlocal.g_star, r.local.f_en);
    return r;
  }

  ForwardResult<T> forward(Graph<T>& g, const Tensor<T>& image) const {
    return forward(g, make_const(image));
  }

  /// Deep copy with identical parameter values.
  Model clone() const {
    Model m(cfg_);
    m.copy_parameters_from(*this);
    return m;
  }

  void copy_parameters_from(const Model& other) {
    auto& dst = store_.all();
    const auto& src = other.store_.all();
    if (dst.size() != src.size()) throw ContractError("parameter sets differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].var.shape() != src[i].var.shape()) {
        throw ContractError("parameter " + dst[i].name + " has a different shape");
      }
      dst[i].var.value() = src[i].var.value();
    }
  }

 private:
  ModelConfig cfg_;
  Geometry geom_;
  ParamStore<T> store_;
  Backbone<T> backbone_;
  NonLocalAttention<T> nonlocal_;
  LocalEnsemble<T> local_;
  FusionHead<T> head_;
};

}  // namespace lnl
