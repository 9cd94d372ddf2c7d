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
#include <vector>

#include "lnlatten/layers.hpp"

namespace lnl {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over every parameter of a store. Moments are kept in double.
template <typename T>
class Adam {
 public:
  explicit Adam(const ParamStore<T>& store, AdamOptions opt = {}) : opt_(opt) {
    for (const auto& p : store.all()) {
      m_.emplace_back(p.var.size(), 0.0);
      v_.emplace_back(p.var.size(), 0.0);
    }
  }

  std::size_t steps() const { return t_; }

  /// Applies one update using the gradients currently held by the store.
  void step(ParamStore<T>& store, double lr) {
    auto& params = store.all();
    if (params.size() != m_.size()) throw ContractError("optimizer/store mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& var = params[i].var;
      if (!var.has_grad()) continue;
      T* w = var.value().ptr();
      const T* g = var.grad().ptr();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < m.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * gj;
        v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * gj * gj;
        const double upd = lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt_.eps);
        w[j] = static_cast<T>(static_cast<double>(w[j]) - upd);
      }
    }
  }

 private:
  AdamOptions opt_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace lnl
