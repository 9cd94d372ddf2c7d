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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "lnlatten/graph.hpp"

namespace lnl {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates sampled per leaf; 0 checks every coordinate.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

template <typename T>
using ScalarFn = std::function<Var<T>(Graph<T>&)>;

/// Compares the recorded gradient of a scalar function against central
/// differences, over the given leaves. The error per coordinate is
/// |analytic - numeric| / max(1, |numeric|).
template <typename T>
GradCheckResult finite_diff_check(const ScalarFn<T>& f,
                                  std::vector<Var<T>> leaves,
                                  const GradCheckOptions& opt = {}) {
  const T h = static_cast<T>(opt.step);
  auto eval = [&]() {
    Graph<T> g(false);
    T v = f(g).value().item();
    if (!std::isfinite(v)) {
      throw NumericalError("finite_diff_check: function is not finite at the point");
    }
    return v;
  };

  for (auto& l : leaves) l.zero_grad();
  {
    Graph<T> g;
    Var<T> y = f(g);
    if (!std::isfinite(y.value().item())) {
      throw NumericalError("finite_diff_check: function is not finite at the point");
    }
    g.backward(y);
  }

  GradCheckResult res;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Var<T>& leaf = leaves[li];
    const std::size_t n = leaf.size();
    Tensor<T> analytic = leaf.has_grad() ? leaf.grad() : Tensor<T>(leaf.shape());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opt.max_coords && opt.max_coords < n) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_coords);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      T& x = leaf.value()[i];
      const T orig = x;
      x = orig + h;
      T fp = eval();
      x = orig - h;
      T fm = eval();
      x = orig;
      double numeric = (static_cast<double>(fp) - static_cast<double>(fm)) /
                       (2.0 * static_cast<double>(h));
      double err = std::abs(static_cast<double>(analytic[i]) - numeric) /
                   std::max(1.0, std::abs(numeric));
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_leaf = li;
        res.worst_index = i;
      }
      ++res.checked;
    }
  }
  return res;
}

/// Single-point form: f takes the graph and the point.
template <typename T>
GradCheckResult finite_diff_check(
    const std::function<Var<T>(Graph<T>&, const Var<T>&)>& f, Var<T> point,
    const GradCheckOptions& opt = {}) {
  ScalarFn<T> g = [&](Graph<T>& graph) { return f(graph, point); };
  return finite_diff_check<T>(g, {point}, opt);
}

}  // namespace lnl
