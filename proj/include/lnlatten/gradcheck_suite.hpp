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

// Central-difference checks of every differentiable operation and of the
// whole tiny model, in double precision.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "lnlatten/gradcheck.hpp"
#include "lnlatten/head.hpp"
#include "lnlatten/model.hpp"

namespace lnl {

struct GradCheckEntry {
  std::string name;
  GradCheckResult result;
  bool passed = false;
};

inline constexpr double kGradTolerance = 1e-4;

namespace detail {

/// Values uniform in +-[lo, hi], away from the ReLU kink.
inline Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = 0.1,
                                    double hi = 1.0) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.vec()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

inline Tensor<double> positive_tensor(Shape s, std::mt19937_64& rng) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

/// sum(y * c) with fixed random c, so every output coordinate matters.
inline Var<double> project(Graph<double>& g, const Var<double>& y, const Tensor<double>& c) {
  return g.sum(g.mul(y, make_const(c)));
}

}  // namespace detail

/// Runs every check; `model_coords` coordinates are sampled per parameter
/// tensor of the tiny model (0 skips the model check).
inline std::vector<GradCheckEntry> gradient_suite(std::uint64_t seed, std::size_t model_coords = 6) {
  using detail::positive_tensor;
  using detail::project;
  using detail::random_tensor;
  using G = Graph<double>;
  using V = Var<double>;
  std::mt19937_64 rng(seed);
  std::vector<GradCheckEntry> out;
  GradCheckOptions opt;
  opt.step = 1e-6;
  opt.seed = seed;

  auto run = [&](const std::string& name, const ScalarFn<double>& f, std::vector<V> leaves,
                 GradCheckOptions o) {
    GradCheckEntry e;
    e.name = name;
    e.result = finite_diff_check<double>(f, std::move(leaves), o);
    e.passed = e.result.max_rel_error < kGradTolerance;
    out.push_back(e);
  };
  // Unary op on a single point with a random projection of its output.
  auto unary = [&](const std::string& name, Tensor<double> x0, Shape out_shape,
                   std::function<V(G&, const V&)> op) {
    V x = make_param(std::move(x0));
    Tensor<double> c = random_tensor(std::move(out_shape), rng);
    run(name, [=](G& g) { return project(g, op(g, x), c); }, {x}, opt);
  };

  {
    V x = make_param(random_tensor({7, 6, 3}, rng));
    V k = make_param(random_tensor({3, 3, 3, 4}, rng));
    V b = make_param(random_tensor({4}, rng));
    Tensor<double> c = random_tensor({7, 6, 4}, rng);
    run("conv2d_same", [=](G& g) { return project(g, g.conv2d(x, k, &b), c); }, {x, k, b}, opt);
  }
  {
    V x = make_param(random_tensor({6, 6, 2}, rng));
    V k = make_param(random_tensor({3, 3, 2, 3}, rng));
    Tensor<double> c = random_tensor({4, 4, 3}, rng);
    run("conv2d_valid", [=](G& g) { return project(g, g.conv2d(x, k, nullptr, 1, Padding::kNone), c); },
        {x, k}, opt);
  }
  {
    V x = make_param(random_tensor({5, 5, 17}, rng));
    V k = make_param(random_tensor({3, 3, 17, 16}, rng, 0.01, 0.1));
    V b = make_param(random_tensor({16}, rng));
    Tensor<double> c = random_tensor({5, 5, 16}, rng);
    run("conv2d_wide", [=](G& g) { return project(g, g.conv2d(x, k, &b), c); }, {x, k, b}, opt);
  }
  {
    V x = make_param(random_tensor({7, 7, 2}, rng));
    V k = make_param(random_tensor({3, 3, 2, 2}, rng));
    Tensor<double> c = random_tensor({4, 4, 2}, rng);
    run("conv2d_stride2", [=](G& g) { return project(g, g.conv2d(x, k, nullptr, 2), c); }, {x, k}, opt);
  }
  {
    V x = make_param(random_tensor({4, 5, 3}, rng));
    V k = make_param(random_tensor({1, 1, 3, 2}, rng));
    V b = make_param(random_tensor({2}, rng));
    Tensor<double> c = random_tensor({4, 5, 2}, rng);
    run("conv2d_pointwise", [=](G& g) { return project(g, g.conv2d(x, k, &b), c); }, {x, k, b}, opt);
  }
  unary("maxpool2d", random_tensor({5, 6, 2}, rng), {2, 3, 2},
        [](G& g, const V& x) { return g.maxpool2d(x); });
  unary("grid_maxpool", random_tensor({5, 5, 2}, rng), {2, 2, 2},
        [](G& g, const V& x) { return g.grid_maxpool(x, 2); });
  unary("upsample2x", random_tensor({3, 2, 2}, rng), {6, 4, 2},
        [](G& g, const V& x) { return g.upsample2x(x); });
  unary("crop", random_tensor({6, 6, 2}, rng), {3, 4, 2},
        [](G& g, const V& x) { return g.crop(x, 1, 2, 3, 4); });
  unary("relu", random_tensor({12}, rng), {12}, [](G& g, const V& x) { return g.relu(x); });
  unary("sigmoid", random_tensor({12}, rng), {12}, [](G& g, const V& x) { return g.sigmoid(x); });
  unary("softmax", random_tensor({7}, rng), {7}, [](G& g, const V& x) { return g.softmax(x); });
  unary("transpose", random_tensor({3, 4}, rng), {4, 3}, [](G& g, const V& x) { return g.transpose(x); });
  unary("reshape", random_tensor({3, 4}, rng), {2, 6},
        [](G& g, const V& x) { return g.reshape(x, Shape{2, 6}); });
  unary("scale", random_tensor({5}, rng), {5}, [](G& g, const V& x) { return g.scale(x, -1.7); });
  unary("sum", random_tensor({6}, rng), {1}, [](G& g, const V& x) { return g.sum(x); });
  unary("squared_norm", random_tensor({6}, rng), {1}, [](G& g, const V& x) { return g.squared_norm(x); });
  unary("row_l1_normalize", positive_tensor({4, 4}, rng), {4, 4},
        [](G& g, const V& x) { return g.row_l1_normalize(x); });
  unary("column_mean", random_tensor({4, 3}, rng), {3}, [](G& g, const V& x) { return g.column_mean(x); });
  {
    V p = make_param(positive_tensor({5}, rng));
    run("nll", [=](G& g) { return g.nll(g.softmax(p), 2); }, {p}, opt);
  }
  {
    V a = make_param(random_tensor({3, 4}, rng));
    V b = make_param(random_tensor({4, 2}, rng));
    Tensor<double> c = random_tensor({3, 2}, rng);
    run("matmul", [=](G& g) { return project(g, g.matmul(a, b), c); }, {a, b}, opt);
  }
  {
    V x = make_param(random_tensor({5}, rng));
    V w = make_param(random_tensor({5, 3}, rng));
    V b = make_param(random_tensor({3}, rng));
    Tensor<double> c = random_tensor({3}, rng);
    run("linear", [=](G& g) { return project(g, g.linear(x, w, &b), c); }, {x, w, b}, opt);
  }
  {
    V a = make_param(random_tensor({2, 3}, rng));
    V b = make_param(random_tensor({1, 3}, rng));
    Tensor<double> c = random_tensor({3, 3}, rng);
    run("concat", [=](G& g) { return project(g, g.concat({a, b}, 0), c); }, {a, b}, opt);
  }
  {
    V a = make_param(random_tensor({6}, rng));
    V b = make_param(random_tensor({6}, rng));
    Tensor<double> c = random_tensor({6}, rng);
    run("add", [=](G& g) { return project(g, g.add(a, b), c); }, {a, b}, opt);
    run("mul", [=](G& g) { return project(g, g.mul(a, b), c); }, {a, b}, opt);
    run("lerp", [=](G& g) { return project(g, g.lerp(a, b, 0.3), c); }, {a, b}, opt);
  }

  if (model_coords > 0) {
    ModelConfig cfg = ModelConfig::for_profile(Profile::kTiny);
    cfg.seed = seed;
    Model<double> model(cfg);
    // Move Q/K off their symmetric start so the attention path is exercised,
    // and biases off zero so no unit sits exactly on a ReLU kink.
    for (auto& p : model.params().all()) {
      if (p.name == "nonlocal.q.w" || p.name == "nonlocal.k.w") {
        p.var.value() = random_tensor(p.var.shape(), rng, 0.0, 0.3);
      } else if (p.name.ends_with(".b")) {
        p.var.value() = random_tensor(p.var.shape(), rng, 0.01, 0.1);
      }
    }
    std::vector<V> leaves;
    for (const auto& p : model.params().all()) leaves.push_back(p.var);
    V image = make_param(positive_tensor({cfg.image_extent, cfg.image_extent, cfg.input_channels}, rng));
    leaves.push_back(image);
    const LossConfig lc = LossConfig::from(cfg);
    GradCheckOptions mo = opt;
    mo.max_coords = model_coords;
    run("tiny_model", [&model, image, lc](G& g) {
          auto r = model.forward(g, image);
          return batch_loss(g, {r.probs}, {1}, model.params(), lc).total;
        },
        leaves, mo);
  }
  return out;
}

}  // namespace lnl
