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

#include "lnlatten/config_io.hpp"

namespace lnl {
namespace {

std::string message_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyFileGivesDefaults) {
  auto rc = parse_config_text("");
  EXPECT_EQ(rc.model.m, 16u);
  EXPECT_EQ(rc.model.alpha, 0.7);
  EXPECT_EQ(rc.model.image_extent, 144u);
  EXPECT_EQ(rc.model.input_channels, 3u);
  EXPECT_EQ(rc.model.class_count, 7u);
  EXPECT_EQ(rc.model.l2_lambda, 1e-4);
  EXPECT_EQ(rc.model.loss_balance, 1.0);
  EXPECT_EQ(rc.model.variant, Variant::kFull);
  EXPECT_EQ(rc.train.learning_rate, 3e-4);
  EXPECT_EQ(rc.train.epochs, 24u);
  EXPECT_EQ(rc.train.batch_size, 24u);
  EXPECT_EQ(rc.train.lr_decay_per_epoch, 0.95);
  EXPECT_TRUE(rc.train.augmentation.horizontal_flip);
  EXPECT_TRUE(rc.train.augmentation.random_crop);
}

TEST(Config, ValueOverridesDefault) {
  EXPECT_EQ(parse_config_text("alpha = 0.3\n").model.alpha, 0.3);
  auto rc = parse_config_text("# comment\n\n  epochs=3  # trailing\nvariant = model_s\noverlap_pixels = 20\n");
  EXPECT_EQ(rc.train.epochs, 3u);
  EXPECT_EQ(rc.model.variant, Variant::kModelS);
  EXPECT_EQ(rc.model.overlap_pixels, std::optional<std::size_t>(20));
}

TEST(Config, UnknownKeyNamesLine) {
  EXPECT_EQ(message_of("alfa = 0.3"), "unknown key 'alfa' at line 1");
  EXPECT_EQ(message_of("alpha = 0.3\n\nbeta = 1\n"), "unknown key 'beta' at line 3");
}

TEST(Config, BadValuesNameLine) {
  EXPECT_NE(message_of("epochs = many").find("at line 1"), std::string::npos);
  EXPECT_NE(message_of("m = 16\nalpha = x").find("alpha"), std::string::npos);
  EXPECT_NE(message_of("variant = huge").find("line 1"), std::string::npos);
  EXPECT_NE(message_of("random_crop = maybe").find("random_crop"), std::string::npos);
  EXPECT_NE(message_of("epochs").find("line 1"), std::string::npos);
  EXPECT_NE(message_of("epochs =").find("missing value"), std::string::npos);
}

TEST(Config, ProfileSelectsDefaults) {
  auto rc = parse_config_text("alpha = 0.5\nprofile = tiny\n");
  EXPECT_EQ(rc.model.profile, Profile::kTiny);
  EXPECT_EQ(rc.model.image_extent, 80u);
  EXPECT_EQ(rc.model.m, 4u);
  EXPECT_EQ(rc.model.alpha, 0.5);
  EXPECT_EQ(rc.train.batch_size, 16u);
}

TEST(Config, OverridesBeatFile) {
  auto file = parse_config_entries("alpha = 0.3\nseed = 4\n");
  auto rc = resolve_config(file, {{"alpha", "0.9"}}, Profile::kTiny);
  EXPECT_EQ(rc.model.alpha, 0.9);
  EXPECT_EQ(rc.model.seed, 4u);
  EXPECT_EQ(rc.model.profile, Profile::kTiny);
}

TEST(Config, CanonicalTextRoundTrips) {
  RunConfig rc = RunConfig::for_profile(Profile::kTiny);
  rc.model.alpha = 0.1 + 0.2;
  rc.model.overlap_ratio = 1.0 / 3.0;
  rc.model.seed = 123456789012345ull;
  rc.model.variant = Variant::kModelNonLocal;
  rc.model.bypass_backbone = true;
  rc.train.learning_rate = 1.0 / 7.0;
  rc.train.augmentation.random_crop = false;
  auto back = parse_config_text(model_config_text(rc.model) + train_config_text(rc.train));
  EXPECT_EQ(back.model, rc.model);
  EXPECT_EQ(back.train, rc.train);
}

TEST(Config, ArchitectureDifference) {
  auto a = ModelConfig::for_profile(Profile::kTiny);
  auto b = a;
  b.seed = 9;
  b.l2_lambda = 0.5;
  EXPECT_TRUE(same_architecture(a, b));
  EXPECT_EQ(architecture_difference(a, b), "");
  b.m = 9;
  EXPECT_FALSE(same_architecture(a, b));
  EXPECT_EQ(architecture_difference(a, b), "m");
}

TEST(Config, EveryKeyIsAccepted) {
  for (const auto& k : config_keys()) {
    std::string v = "1";
    if (k == "profile") v = "tiny";
    if (k == "variant") v = "full";
    if (k == "overlap_ratio" || k == "alpha" || k == "lr_decay_per_epoch") v = "0.5";
    EXPECT_NO_THROW(parse_config_entries(k + " = " + v)) << k;
  }
}

}  // namespace
}  // namespace lnl
