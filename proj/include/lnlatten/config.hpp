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

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "lnlatten/errors.hpp"

namespace lnl {

enum class Profile { kPaper, kTiny };

/// Ablation variants: which of the two attention families are active.
enum class Variant { kFull, kModelS, kModelLocal, kModelNonLocal };

inline std::string to_string(Profile p) {
  return p == Profile::kPaper ? "paper" : "tiny";
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kModelS: return "model_s";
    case Variant::kModelLocal: return "model_local";
    case Variant::kModelNonLocal: return "model_nonlocal";
  }
  return "?";
}

inline Profile parse_profile(std::string_view s) {
  if (s == "paper") return Profile::kPaper;
  if (s == "tiny") return Profile::kTiny;
  throw ConfigError("profile must be one of {paper, tiny}, got '" +
                    std::string(s) + "'");
}

inline Variant parse_variant(std::string_view s) {
  if (s == "full") return Variant::kFull;
  if (s == "model_s") return Variant::kModelS;
  if (s == "model_local") return Variant::kModelLocal;
  if (s == "model_nonlocal") return Variant::kModelNonLocal;
  throw ConfigError(
      "variant must be one of {full, model_s, model_local, model_nonlocal}, got '" +
      std::string(s) + "'");
}

inline bool uses_nonlocal_weights(Variant v) {
  return v == Variant::kFull || v == Variant::kModelNonLocal;
}

inline bool uses_local_gates(Variant v) {
  return v == Variant::kFull || v == Variant::kModelLocal;
}

/// Channel widths of every stage.
struct Widths {
  /// Encoder stages 1..5; the decoder mirrors stages 4..1.
  std::array<std::size_t, 5> unet;
  /// SimpleNet blocks 1..3.
  std::array<std::size_t, 3> simple;
  /// Local-attention convs: 3x3 valid (simple[2] -> gate[0]), 1x1 -> gate[1],
  /// 3x3 valid -> gate[1], 1x1 -> gate[2].
  std::array<std::size_t, 3> gate;
  std::size_t gate_fc;
  std::array<std::size_t, 2> fc_hidden;

  static Widths for_profile(Profile p) {
    if (p == Profile::kPaper) {
      return Widths{{64, 128, 256, 512, 512}, {64, 128, 256}, {256, 128, 64}, 64,
                    {2048, 1024}};
    }
    return Widths{{2, 4, 8, 8, 8}, {2, 4, 4}, {4, 4, 4}, 8, {32, 16}};
  }

  friend bool operator==(const Widths&, const Widths&) = default;
};

struct ModelConfig {
  Profile profile = Profile::kPaper;
  std::size_t image_extent = 144;
  std::size_t input_channels = 3;
  std::size_t m = 16;
  double alpha = 0.7;
  double overlap_ratio = 1.0 / 3.0;
  /// When set, the patch layout is solved from this overlap instead of the ratio.
  std::optional<std::size_t> overlap_pixels;
  Variant variant = Variant::kFull;
  std::size_t class_count = 7;
  std::uint64_t seed = 1;
  /// Weight of the l2 term relative to cross entropy.
  double loss_balance = 1.0;
  double l2_lambda = 1e-4;
  /// Diagnostic: local branches crop the raw image instead of the decoder map.
  bool bypass_backbone = false;
  Widths widths = Widths::for_profile(Profile::kPaper);

  static ModelConfig for_profile(Profile p) {
    ModelConfig c;
    c.profile = p;
    c.widths = Widths::for_profile(p);
    if (p == Profile::kTiny) {
      c.image_extent = 80;
      c.input_channels = 1;
      c.m = 4;
      c.class_count = 3;
    }
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Augmentation {
  bool horizontal_flip = true;
  bool random_crop = true;
  friend bool operator==(const Augmentation&, const Augmentation&) = default;
};

struct TrainConfig {
  std::size_t epochs = 24;
  std::size_t batch_size = 24;
  double learning_rate = 3e-4;
  double lr_decay_per_epoch = 0.95;
  Augmentation augmentation;

  static TrainConfig for_profile(Profile p) {
    TrainConfig t;
    if (p == Profile::kTiny) t.batch_size = 16;
    return t;
  }

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be positive");
    }
    if (!(lr_decay_per_epoch > 0.0 && lr_decay_per_epoch <= 1.0)) {
      throw ConfigError("lr_decay_per_epoch must be in (0, 1]");
    }
  }

  /// Learning rate used during the given zero-based epoch.
  double lr_at_epoch(std::size_t epoch) const {
    return learning_rate * std::pow(lr_decay_per_epoch, static_cast<double>(epoch));
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

}  // namespace lnl
