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

#include "lnlatten/checkpoint.hpp"
#include "lnlatten/synth.hpp"
#include "lnlatten/train.hpp"
#include "test_util.hpp"

namespace lnl {
namespace {

using testing::scratch_dir;

ModelConfig tiny(std::uint64_t seed = 3) {
  auto c = ModelConfig::for_profile(Profile::kTiny);
  c.seed = seed;
  return c;
}

TEST(Checkpoint, BytesRoundTrip) {
  Model<float> a(tiny());
  const std::string bytes = checkpoint_bytes(a);
  auto ck = parse_checkpoint(bytes);
  EXPECT_EQ(ck.precision, 32u);
  EXPECT_EQ(ck.config, a.config());
  Model<float> b(tiny());
  for (auto& p : b.params().all()) p.var.value().fill(0.5f);
  load_parameters(b, ck);
  EXPECT_EQ(checkpoint_bytes(b), bytes);
  const auto& pa = a.params().all();
  const auto& pb = b.params().all();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].var.value().vec(), pb[i].var.value().vec()) << pa[i].name;
}

TEST(Checkpoint, FileRoundTripIsByteIdentical) {
  auto dir = scratch_dir("ckpt");
  Model<float> a(tiny());
  save_checkpoint(dir / "a.lnl", a);
  auto b = load_model<float>(dir / "a.lnl");
  save_checkpoint(dir / "b.lnl", b);
  EXPECT_EQ(read_file(dir / "a.lnl"), read_file(dir / "b.lnl"));
}

TEST(Checkpoint, DoublePrecisionIsExact) {
  Model<double> a(tiny());
  auto ck = parse_checkpoint(checkpoint_bytes(a, 64));
  EXPECT_EQ(ck.precision, 64u);
  Model<double> b(tiny());
  for (auto& p : b.params().all()) p.var.value().fill(0.5);
  load_parameters(b, ck);
  EXPECT_EQ(checkpoint_bytes(a, 64), checkpoint_bytes(b, 64));
  // 32-bit storage widens to the nearest float.
  auto narrow = parse_checkpoint(checkpoint_bytes(a, 32));
  const auto& p = a.params().all().front();
  EXPECT_EQ(narrow.blocks.front().values[0], static_cast<double>(static_cast<float>(p.var.value()[0])));
}

TEST(Checkpoint, CorruptionIsDataError) {
  Model<float> a(tiny());
  std::string bytes = checkpoint_bytes(a);
  EXPECT_THROW(parse_checkpoint("junk"), DataError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() / 2)), DataError);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(parse_checkpoint(flipped), DataError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(magic), DataError);
}

TEST(Checkpoint, ArchitectureMismatchNamesField) {
  Model<float> a(tiny());
  auto ck = parse_checkpoint(checkpoint_bytes(a));
  auto other = tiny();
  other.class_count = 5;
  Model<float> b(other);
  try {
    load_parameters(b, ck);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("class_count"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, EvaluationAfterReloadIsIdentical) {
  SynthOptions o;
  o.samples_per_class = 4;
  o.test_fraction = 0.5;
  auto data = synth_dataset(o);
  Model<float> a(tiny());
  auto tc = TrainConfig::for_profile(Profile::kTiny);
  tc.epochs = 1;
  tc.batch_size = 3;
  train(a, tc, data.train);
  auto dir = scratch_dir("ckpt_eval");
  save_checkpoint(dir / "m.lnl", a);
  auto b = load_model<float>(dir / "m.lnl");
  for (const auto& img : data.test.images) {
    auto pa = predict(a, to_tensor<float>(img));
    auto pb = predict(b, to_tensor<float>(img));
    EXPECT_EQ(pa.probs, pb.probs);
    EXPECT_EQ(pa.wg, pb.wg);
    EXPECT_EQ(pa.gates, pb.gates);
  }
  EXPECT_EQ(evaluate(a, data.test).confusion, evaluate(b, data.test).confusion);
}

}  // namespace
}  // namespace lnl
