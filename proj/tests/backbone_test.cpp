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

#include "lnlatten/backbone.hpp"
#include "lnlatten/layout.hpp"
#include "test_util.hpp"

namespace lnl {
namespace {

using testing::random_tensor;

TEST(Backbone, PaperProfileShapes) {
  auto cfg = ModelConfig::for_profile(Profile::kPaper);
  ParamStore<float> store;
  Rng rng(1);
  Backbone<float> net(store, cfg, rng);
  Graph<float> g(false);
  auto out = net.forward(g, make_const(Tensor<float>(Shape{144, 144, 3})));
  EXPECT_EQ(out.f5.shape(), (Shape{9, 9, 512}));
  EXPECT_EQ(out.f9.shape(), (Shape{144, 144, 64}));
  EXPECT_TRUE(out.f5.value().all_finite());
  EXPECT_TRUE(out.f9.value().all_finite());
}

TEST(Backbone, ChannelSchedule) {
  auto w = Widths::for_profile(Profile::kPaper);
  EXPECT_EQ(w.unet, (std::array<std::size_t, 5>{64, 128, 256, 512, 512}));
  ParamStore<float> store;
  Rng rng(1);
  Backbone<float> net(store, ModelConfig::for_profile(Profile::kPaper), rng);
  // Decoder stage 9 ends at the first encoder width.
  for (const auto& p : store.all()) {
    if (p.name == "unet.conv9_2.w") {
      EXPECT_EQ(p.var.shape(), (Shape{3, 3, 64, 64}));
    }
  }
}

TEST(Backbone, TinyProfileShapes) {
  auto cfg = ModelConfig::for_profile(Profile::kTiny);
  ParamStore<double> store;
  Rng rng(2);
  Backbone<double> net(store, cfg, rng);
  Graph<double> g(false);
  auto out = net.forward(g, make_const(random_tensor({80, 80, 1}, 3, 0.0, 1.0)));
  EXPECT_EQ(out.f5.shape(), (Shape{5, 5, cfg.widths.unet[4]}));
  EXPECT_EQ(out.f9.shape(), (Shape{80, 80, cfg.widths.unet[0]}));
}

TEST(Backbone, RejectsWrongExtent) {
  auto cfg = ModelConfig::for_profile(Profile::kTiny);
  ParamStore<double> store;
  Rng rng(2);
  Backbone<double> net(store, cfg, rng);
  Graph<double> g(false);
  EXPECT_THROW(net.forward(g, make_const(Tensor<double>(Shape{81, 81, 1}))), ConfigError);
  cfg.image_extent = 145;
  EXPECT_THROW(derive_geometry(cfg), ConfigError);
}

TEST(Backbone, SkipsAreLive) {
  auto cfg = ModelConfig::for_profile(Profile::kTiny);
  ParamStore<double> store;
  Rng rng(4);
  Backbone<double> net(store, cfg, rng);
  auto x = make_const(random_tensor({80, 80, 1}, 5, 0.0, 1.0));
  Graph<double> g(false);
  auto with = net.forward(g, x, true);
  auto without = net.forward(g, x, false);
  EXPECT_EQ(with.f5.value(), without.f5.value());
  EXPECT_NE(with.f9.value(), without.f9.value());
}

TEST(Backbone, InputGradientMatchesFiniteDifferences) {
  auto cfg = ModelConfig::for_profile(Profile::kTiny);
  ParamStore<double> store;
  Rng rng(6);
  Backbone<double> net(store, cfg, rng);
  for (auto& p : store.all())
    if (!p.is_weight) p.var.value() = random_tensor(p.var.shape(), 7, 0.01, 0.1);
  auto img = random_tensor({80, 80, 1}, 8, 0.0, 1.0);
  auto loss = [&](const Tensor<double>& x) {
    Graph<double> g(false);
    auto o = net.forward(g, make_const(x));
    return o.f5.value().sum() + o.f9.value().sum();
  };
  Var<double> x = make_param(img);
  {
    Graph<double> g;
    auto o = net.forward(g, x);
    g.backward(g.add(g.sum(o.f5), g.sum(o.f9)));
  }
  const double h = 1e-6;
  for (std::size_t y = 30; y < 33; ++y)
    for (std::size_t xx = 40; xx < 43; ++xx) {
      const std::size_t i = y * 80 + xx;
      auto p = img, m = img;
      p[i] += h;
      m[i] -= h;
      const double num = (loss(p) - loss(m)) / (2 * h);
      EXPECT_LT(std::abs(x.grad()[i] - num) / std::max(1.0, std::abs(num)), 1e-4) << y << "," << xx;
    }
}

}  // namespace
}  // namespace lnl
