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
#include "lnlatten/local_ensemble.hpp"
#include "test_util.hpp"

namespace lnl {
namespace {

using testing::random_tensor;
using G = Graph<double>;
using V = Var<double>;

TEST(Crop, FirstPatchStartsAtOrigin) {
  auto layout = plan_patches(80, 4, 1.0 / 3.0);
  auto map = random_tensor({80, 80, 3}, 1);
  G g(false);
  auto patches = crop(g, make_const(map), layout);
  ASSERT_EQ(patches.size(), 4u);
  EXPECT_EQ(patches[0].shape(), (Shape{48, 48, 3}));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(patches[0].value().at({0, 0, c}), map.at({0, 0, c}));
  EXPECT_EQ(patches[3].value().at({0, 0, 0}), map.at({32, 32, 0}));
}

TEST(Crop, AdjacentPatchesShareOverlapStrip) {
  auto layout = plan_patches(80, 4, 1.0 / 3.0);
  const std::size_t c = 3;
  auto map = random_tensor({80, 80, c}, 2);
  G g(false);
  auto patches = crop(g, make_const(map), layout);
  // Columns [32, 48) of the image appear in patches 0 and 1.
  std::size_t shared = 0;
  for (std::size_t y = 0; y < 48; ++y)
    for (std::size_t x = layout.stride; x < layout.patch_size; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        EXPECT_EQ(patches[0].value().at({y, x, ch}), patches[1].value().at({y, x - layout.stride, ch}));
        ++shared;
      }
  EXPECT_EQ(shared, layout.overlap * layout.patch_size * c);
}

TEST(Crop, GradientCountsCoverage) {
  auto layout = plan_patches(80, 4, 1.0 / 3.0);
  V map = make_param(random_tensor({80, 80, 1}, 3));
  G g;
  auto patches = crop(g, map, layout);
  g.backward(g.sum(g.concat(std::vector<V>{g.flatten(patches[0]), g.flatten(patches[1]), g.flatten(patches[2]),
                                            g.flatten(patches[3])},
                            0)));
  auto cover = [&](std::size_t i) { return (i >= 32 && i < 48) ? 2.0 : 1.0; };
  for (std::size_t y = 0; y < 80; ++y)
    for (std::size_t x = 0; x < 80; ++x) EXPECT_EQ(map.grad().at({y, x, 0}), cover(y) * cover(x));
  EXPECT_EQ(map.grad().at({40, 40, 0}), 4.0);
}

TEST(Crop, RejectsMismatchedMap) {
  auto layout = plan_patches(80, 4, 1.0 / 3.0);
  G g(false);
  EXPECT_THROW(crop(g, make_const(Tensor<double>(Shape{64, 64, 1})), layout), DimensionError);
}

struct BranchFixture {
  ModelConfig cfg;
  Geometry geom;
  ParamStore<double> store;
  LocalBranch<double> branch;

  BranchFixture(Profile p, std::size_t cin) : cfg(ModelConfig::for_profile(p)), geom(derive_geometry(cfg)) {
    Rng rng(1);
    branch = LocalBranch<double>(store, "b", cin, cfg.widths, geom, true, rng);
  }
};

TEST(SimpleNet, PaperShapeChain) {
  BranchFixture f(Profile::kPaper, 64);
  Graph<double> g(false);
  auto out = f.branch.simple_net_forward(g, make_const(random_tensor({48, 48, 64}, 4, 0.0, 1.0)));
  EXPECT_EQ(out.shape(), (Shape{6, 6, 256}));
  EXPECT_EQ(f.geom.local_dim, 6u * 6u * 256u);
}

TEST(SimpleNet, TinyShapeChain) {
  BranchFixture f(Profile::kTiny, 2);
  G g(false);
  auto out = f.branch.simple_net_forward(g, make_const(random_tensor({48, 48, 2}, 5, 0.0, 1.0)));
  EXPECT_EQ(out.shape(), (Shape{6, 6, f.cfg.widths.simple[2]}));
}

TEST(SimpleNet, Gradient) {
  BranchFixture f(Profile::kTiny, 2);
  for (auto& p : f.store.all())
    if (!p.is_weight) p.var.value() = random_tensor(p.var.shape(), 6, 0.01, 0.1);
  V x = make_param(random_tensor({16, 16, 2}, 7, 0.0, 1.0));
  auto proj = random_tensor({2, 2, f.cfg.widths.simple[2]}, 8);
  auto r = finite_diff_check<double>(
      [&](G& g) { return g.sum(g.mul(f.branch.simple_net_forward(g, x), make_const(proj))); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(LocalGate, ZeroInputGivesHalf) {
  BranchFixture f(Profile::kTiny, 2);
  G g(false);
  auto w = f.branch.local_gate(g, make_const(Tensor<double>(Shape{6, 6, f.cfg.widths.simple[2]})));
  EXPECT_EQ(w.shape(), (Shape{1}));
  EXPECT_EQ(w.value()[0], 0.5);
}

TEST(LocalGate, PaperShapeChain) {
  auto geom = derive_geometry(ModelConfig::for_profile(Profile::kPaper));
  EXPECT_EQ(geom.gate_mid, 4u);
  EXPECT_EQ(geom.gate_out, 2u);
  EXPECT_EQ(geom.gate_flat, 256u);
  BranchFixture f(Profile::kPaper, 64);
  G g(false);
  auto w = f.branch.local_gate(g, make_const(random_tensor({6, 6, 256}, 9, 0.0, 1.0)));
  EXPECT_EQ(w.shape(), (Shape{1}));
  EXPECT_GT(w.value()[0], 0.0);
  EXPECT_LT(w.value()[0], 1.0);
  const auto* fc1 = f.store.find("b.gate.fc1.w");
  ASSERT_NE(fc1, nullptr);
  EXPECT_EQ(fc1->var.shape(), (Shape{256, 64}));
  EXPECT_EQ(f.store.find("b.gate.fc2.w")->var.shape(), (Shape{64, 1}));
}

TEST(LocalGate, Gradient) {
  BranchFixture f(Profile::kTiny, 2);
  for (auto& p : f.store.all())
    if (!p.is_weight) p.var.value() = random_tensor(p.var.shape(), 10, 0.01, 0.1);
  V x = make_param(random_tensor({6, 6, f.cfg.widths.simple[2]}, 11, 0.0, 1.0));
  auto r = finite_diff_check<double>([&](G& g) { return g.sum(f.branch.local_gate(g, x)); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

std::vector<V> consts(const std::vector<Tensor<double>>& ts) {
  std::vector<V> out;
  for (const auto& t : ts) out.push_back(make_const(t));
  return out;
}

TEST(Combine, OneHotSelects) {
  std::vector<Tensor<double>> f;
  for (std::uint64_t i = 0; i < 4; ++i) f.push_back(random_tensor({5}, 20 + i));
  G g(false);
  auto ones = consts(std::vector<Tensor<double>>(4, Tensor<double>::scalar(1.0)));
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor<double> wg(Shape{4});
    wg[i] = 1.0;
    EXPECT_EQ(combine(g, consts(f), ones, make_const(wg)).value(), f[i]);
  }
}

TEST(Combine, HalfGatesUniformWeights) {
  std::vector<Tensor<double>> f;
  for (std::uint64_t i = 0; i < 4; ++i) f.push_back(random_tensor({5}, 30 + i));
  G g(false);
  auto half = consts(std::vector<Tensor<double>>(4, Tensor<double>::scalar(0.5)));
  auto fen = combine(g, consts(f), half, make_const(Tensor<double>(Shape{4}, 0.25)));
  for (std::size_t k = 0; k < 5; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 4; ++i) mean += f[i][k] / 4.0;
    EXPECT_NEAR(fen.value()[k], mean / 2.0, 1e-15);
  }
}

TEST(Combine, MatchesLoopOracle) {
  std::vector<Tensor<double>> f, gates;
  for (std::uint64_t i = 0; i < 4; ++i) {
    f.push_back(random_tensor({7}, 40 + i));
    gates.push_back(random_tensor({1}, 50 + i, 0.0, 1.0));
  }
  auto wg = random_tensor({4}, 60, 0.0, 1.0);
  G g(false);
  auto fen = combine(g, consts(f), consts(gates), make_const(wg));
  for (std::size_t k = 0; k < 7; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += wg[i] * gates[i][0] * f[i][k];
    EXPECT_NEAR(fen.value()[k], s, 1e-12);
  }
}

TEST(Combine, WeightedAverageBound) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<Tensor<double>> f, gates;
    double max_gate = 0.0, max_norm = 0.0;
    for (std::uint64_t i = 0; i < 4; ++i) {
      f.push_back(random_tensor({6}, 100 * seed + i));
      gates.push_back(random_tensor({1}, 100 * seed + 10 + i, 0.0, 1.0));
      max_gate = std::max(max_gate, gates.back()[0]);
      double n = 0.0;
      for (double v : f.back().vec()) n += v * v;
      max_norm = std::max(max_norm, std::sqrt(n));
    }
    G g(false);
    auto wg = g.row_l1_normalize(make_const(random_tensor({1, 4}, 100 * seed + 20, 0.0, 1.0)));
    auto fen = combine(g, consts(f), consts(gates), g.reshape(wg, Shape{4}));
    double n = 0.0;
    for (double v : fen.value().vec()) n += v * v;
    EXPECT_LE(std::sqrt(n), max_gate * max_norm + 1e-12);
  }
}

TEST(Ensemble, BranchIndependence) {
  auto cfg = ModelConfig::for_profile(Profile::kTiny);
  auto geom = derive_geometry(cfg);
  ParamStore<double> store;
  Rng rng(3);
  LocalEnsemble<double> ens(store, cfg, geom, rng);
  auto map = make_const(random_tensor({80, 80, cfg.widths.unet[0]}, 70, 0.0, 1.0));
  auto wg = make_const(Tensor<double>(Shape{4}, 0.25));
  G g(false);
  auto before = ens.forward(g, map, wg);
  for (auto& p : store.all())
    if (p.name.rfind("local2.", 0) == 0 && p.is_weight)
      for (auto& v : p.var.value().vec()) v *= 1.5;
  auto after = ens.forward(g, map, wg);
  for (std::size_t i = 0; i < 4; ++i) {
    if (i == 2) {
      EXPECT_NE(before.features[i].value(), after.features[i].value());
      EXPECT_NE(before.gates[i].value(), after.gates[i].value());
    } else {
      EXPECT_EQ(before.features[i].value(), after.features[i].value()) << i;
      EXPECT_EQ(before.gates[i].value(), after.gates[i].value()) << i;
    }
  }
}

TEST(Ensemble, GatelessVariantsUseUnitGates) {
  auto cfg = ModelConfig::for_profile(Profile::kTiny);
  cfg.variant = Variant::kModelS;
  auto geom = derive_geometry(cfg);
  ParamStore<double> store;
  Rng rng(4);
  LocalEnsemble<double> ens(store, cfg, geom, rng);
  EXPECT_EQ(store.find("local0.gate.fc1.w"), nullptr);
  G g(false);
  auto out = ens.forward(g, make_const(random_tensor({80, 80, cfg.widths.unet[0]}, 71, 0.0, 1.0)),
                         make_const(Tensor<double>(Shape{4}, 0.25)));
  for (const auto& gate : out.gates) EXPECT_EQ(gate.value()[0], 1.0);
  EXPECT_EQ(out.f_en.shape(), (Shape{geom.local_dim}));
}

TEST(Ensemble, GatesInOpenUnitInterval) {
  auto cfg = ModelConfig::for_profile(Profile::kTiny);
  auto geom = derive_geometry(cfg);
  ParamStore<double> store;
  Rng rng(5);
  LocalEnsemble<double> ens(store, cfg, geom, rng);
  G g(false);
  auto out = ens.forward(g, make_const(random_tensor({80, 80, cfg.widths.unet[0]}, 72, 0.0, 1.0)),
                         make_const(Tensor<double>(Shape{4}, 0.25)));
  for (const auto& gate : out.gates) {
    EXPECT_GT(gate.value()[0], 0.0);
    EXPECT_LT(gate.value()[0], 1.0);
  }
}

}  // namespace
}  // namespace lnl
