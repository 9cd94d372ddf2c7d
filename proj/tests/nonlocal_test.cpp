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

#include <gtest/gtest.h>

#include "lnlatten/gradcheck.hpp"
#include "lnlatten/nonlocal.hpp"
#include "test_util.hpp"

namespace lnl {
namespace {

using testing::random_tensor;
using G = Graph<double>;
using V = Var<double>;

struct Fixture {
  ModelConfig cfg;
  Geometry geom;
  ParamStore<double> store;
  NonLocalAttention<double> net;

  explicit Fixture(Profile p, std::uint64_t seed = 1) : cfg(ModelConfig::for_profile(p)), geom(derive_geometry(cfg)) {
    Rng rng(seed);
    net = NonLocalAttention<double>(store, cfg, geom, rng);
  }
  Var<double>& param(const std::string& name) {
    for (auto& p : store.all())
      if (p.name == name) return p.var;
    throw std::runtime_error("no parameter " + name);
  }
  Tensor<double> f5(std::uint64_t seed) const {
    const std::size_t b = geom.bottleneck;
    return random_tensor({b, b, cfg.widths.unet[4]}, seed, 0.0, 1.0);
  }
  void randomize_qk(std::uint64_t seed) {
    param("nonlocal.q.w").value() = random_tensor(param("nonlocal.q.w").shape(), seed, 0.0, 0.5);
    param("nonlocal.k.w").value() = random_tensor(param("nonlocal.k.w").shape(), seed + 1, 0.0, 0.5);
  }
};

TEST(NonLocal, PaperProjectionShapes) {
  Fixture f(Profile::kPaper);
  G g(false);
  auto qkv = f.net.project_qkv(g, make_const(f.f5(1)));
  EXPECT_EQ(qkv.qstar.shape(), (Shape{16, 512}));
  EXPECT_EQ(qkv.kstar.shape(), (Shape{512, 16}));
  EXPECT_EQ(qkv.vstar.shape(), (Shape{16, 512}));
  EXPECT_EQ(f.net.encode_global(g, make_const(f.f5(2))).shape(), (Shape{8192}));
}

TEST(NonLocal, TinyProjectionShapes) {
  Fixture f(Profile::kTiny);
  const std::size_t d = f.cfg.widths.unet[4];
  G g(false);
  auto qkv = f.net.project_qkv(g, make_const(f.f5(1)));
  EXPECT_EQ(qkv.qstar.shape(), (Shape{4, d}));
  EXPECT_EQ(qkv.kstar.shape(), (Shape{d, 4}));
  EXPECT_EQ(qkv.vstar.shape(), (Shape{4, d}));
  EXPECT_EQ(f.net.encode_global(g, make_const(f.f5(2))).shape(), (Shape{4 * d}));
}

TEST(NonLocal, IdentityQueryIsPooledInput) {
  Fixture f(Profile::kTiny);
  const std::size_t d = f.cfg.widths.unet[4];
  auto& q = f.param("nonlocal.q.w");
  q.value().fill(0.0);
  for (std::size_t c = 0; c < d; ++c) q.value().at({0, 0, c, c}) = 1.0;
  f.param("nonlocal.q.b").value().fill(0.0);
  auto x = f.f5(3);
  G g(false);
  auto qs = f.net.project_qkv(g, make_const(x)).qstar;
  auto pooled = g.maxpool2d(make_const(x));
  EXPECT_EQ(qs.value().vec(), pooled.value().vec());
}

TEST(NonLocal, WeightsUniformAtInit) {
  Fixture f(Profile::kTiny);
  G g(false);
  auto out = f.net.forward(g, make_const(f.f5(4)), 0.7);
  for (double w : out.wg.value().vec()) EXPECT_EQ(w, 0.25);
}

TEST(NonLocal, ColumnMeanExamples) {
  G g(false);
  auto w = weights_from_r(g, make_const(Tensor<double>(Shape{16, 16}, 1.0 / 16)));
  for (double v : w.value().vec()) EXPECT_DOUBLE_EQ(v, 0.0625);
  Tensor<double> eye(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  auto we = weights_from_r(g, make_const(eye));
  for (double v : we.value().vec()) EXPECT_EQ(v, 0.25);
}

TEST(NonLocal, ColumnMeanOfRowStochasticSumsToOne) {
  G g(false);
  auto r = g.row_l1_normalize(make_const(random_tensor({16, 16}, 5, 0.0, 1.0)));
  auto w = weights_from_r(g, r);
  double total = 0.0;
  for (std::size_t j = 0; j < 16; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < 16; ++i) col += r.value().at({i, j});
    EXPECT_NEAR(w.value()[j], col / 16.0, 1e-15);
    total += w.value()[j];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(NonLocal, SelfValueExamples) {
  G g(false);
  auto v = random_tensor({4, 3}, 6);
  Tensor<double> eye(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  EXPECT_EQ(self_value(g, make_const(eye), make_const(v)).value(), v);
  auto s = self_value(g, make_const(Tensor<double>(Shape{4, 4}, 0.25)), make_const(v));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (std::size_t k = 0; k < 4; ++k) mean += v.at({k, c}) / 4.0;
      EXPECT_NEAR(s.value().at({i, c}), mean, 1e-15);
    }
  auto r = random_tensor({4, 4}, 7, 0.0, 1.0);
  auto s2 = self_value(g, make_const(r), make_const(v));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += r.at({i, k}) * v.at({k, c});
      EXPECT_NEAR(s2.value().at({i, c}), acc, 1e-12);
    }
}

TEST(NonLocal, MixLimitsAreExact) {
  auto gv = random_tensor({12}, 8);
  auto s = random_tensor({3, 4}, 9);
  G g(false);
  EXPECT_EQ(mix(g, make_const(gv), make_const(s), 0.0).value().vec(), gv.vec());
  EXPECT_EQ(mix(g, make_const(gv), make_const(s), 1.0).value().vec(), s.vec());
  auto m = mix(g, make_const(Tensor<double>(Shape{2}, std::vector<double>{1, 0})),
               make_const(Tensor<double>(Shape{1, 2}, std::vector<double>{0, 1})), 0.7);
  EXPECT_NEAR(m.value()[0], 0.3, 1e-15);
  EXPECT_NEAR(m.value()[1], 0.7, 1e-15);
  EXPECT_THROW(mix(g, make_const(gv), make_const(s), 1.5), ConfigError);
}

TEST(NonLocal, MixIsLinearInAlpha) {
  auto gv = random_tensor({12}, 10);
  auto s = random_tensor({3, 4}, 11);
  G g(false);
  for (double a : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    auto m = mix(g, make_const(gv), make_const(s), a);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(m.value()[i], gv[i] + a * (s[i] - gv[i]), 1e-12);
  }
}

TEST(NonLocal, NormalizationHoldsOnRandomInputs) {
  Fixture f(Profile::kTiny);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    f.randomize_qk(100 + seed);
    G g(false);
    auto out = f.net.forward(g, make_const(f.f5(seed)), 0.7);
    const auto& r = out.r.value();
    for (std::size_t i = 0; i < 4; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 4; ++j) row += r.at({i, j});
      EXPECT_NEAR(row, 1.0, 1e-12);
    }
    EXPECT_NEAR(out.wg.value().sum(), 1.0, 1e-12);
  }
}

TEST(NonLocal, QueryKernelDoesNotTouchValues) {
  Fixture f(Profile::kTiny);
  f.randomize_qk(12);
  auto x = make_const(f.f5(13));
  G g(false);
  auto before = f.net.forward(g, x, 0.5);
  auto vb = f.net.project_qkv(g, x).vstar.value();
  f.param("nonlocal.q.w").value() = random_tensor(f.param("nonlocal.q.w").shape(), 14, 0.0, 0.5);
  auto after = f.net.forward(g, x, 0.5);
  EXPECT_NE(before.r.value(), after.r.value());
  EXPECT_EQ(vb, f.net.project_qkv(g, x).vstar.value());
}

TEST(NonLocal, GradientReachesAllBranches) {
  Fixture f(Profile::kTiny);
  f.randomize_qk(15);
  auto proj_g = random_tensor({f.geom.global_dim}, 16);
  auto proj_w = random_tensor({4}, 17);
  G g;
  auto out = f.net.forward(g, make_const(f.f5(18)), 0.5);
  g.backward(g.add(g.sum(g.mul(out.g_star, make_const(proj_g))), g.sum(g.mul(out.wg, make_const(proj_w)))));
  for (const char* name : {"nonlocal.q.w", "nonlocal.k.w", "nonlocal.v.w"}) {
    const auto& gr = f.param(name).grad();
    double norm = 0.0;
    for (double v : gr.vec()) norm += v * v;
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(NonLocal, GlobalEncodingGradient) {
  Fixture f(Profile::kTiny);
  for (auto& p : f.store.all())
    if (!p.is_weight) p.var.value() = random_tensor(p.var.shape(), 19, 0.01, 0.1);
  V x = make_param(f.f5(20));
  auto proj = random_tensor({f.geom.global_dim}, 21);
  auto r = finite_diff_check<double>([&](G& g) { return g.sum(g.mul(f.net.encode_global(g, x), make_const(proj))); },
                                     {x});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(NonLocal, FullBlockGradient) {
  Fixture f(Profile::kTiny);
  f.randomize_qk(22);
  V x = make_param(f.f5(23));
  auto pg = random_tensor({f.geom.global_dim}, 24);
  auto pw = random_tensor({4}, 25);
  std::vector<V> leaves{x};
  for (auto& p : f.store.all()) leaves.push_back(p.var);
  auto r = finite_diff_check<double>(
      [&](G& g) {
        auto o = f.net.forward(g, x, 0.4);
        return g.add(g.sum(g.mul(o.g_star, make_const(pg))), g.sum(g.mul(o.wg, make_const(pw))));
      },
      leaves, GradCheckOptions{1e-6, 8, 3});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(NonLocal, VariantWithoutAttention) {
  auto cfg = ModelConfig::for_profile(Profile::kTiny);
  cfg.variant = Variant::kModelLocal;
  auto geom = derive_geometry(cfg);
  ParamStore<double> store;
  Rng rng(1);
  NonLocalAttention<double> net(store, cfg, geom, rng);
  EXPECT_EQ(store.find("nonlocal.q.w"), nullptr);
  G g(false);
  auto out = net.forward(g, make_const(random_tensor({5, 5, cfg.widths.unet[4]}, 2, 0.0, 1.0)), 0.7);
  EXPECT_EQ(out.g_star.value(), out.g.value());
  for (double w : out.wg.value().vec()) EXPECT_EQ(w, 0.25);
}

}  // namespace
}  // namespace lnl
