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

// Plain-text configuration: one `key = value` per line, `#` starts a comment.

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lnlatten/config.hpp"

namespace lnl {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  static RunConfig for_profile(Profile p) {
    return {ModelConfig::for_profile(p), TrainConfig::for_profile(p)};
  }
};

/// key -> value overrides in application order.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(std::string s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("cannot parse value '" + v + "' for key '" + key + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("cannot parse value '" + v + "' for key '" + key +
                    "' (expected true or false)");
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "profile",        "image_extent", "input_channels",  "m",
      "alpha",          "overlap_ratio", "overlap_pixels", "variant",
      "class_count",    "seed",         "loss_balance",    "l2_lambda",
      "bypass_backbone", "epochs",      "batch_size",      "learning_rate",
      "lr_decay_per_epoch", "horizontal_flip", "random_crop"};
  return keys;
}

/// Applies one key. Throws ConfigError naming the key on a bad value.
inline void apply_entry(RunConfig& rc, const std::string& key, const std::string& v) {
  using detail::parse_number;
  auto& m = rc.model;
  auto& t = rc.train;
  if (key == "profile") {
    parse_profile(v);  // profile defaults are applied before entries
  } else if (key == "image_extent") {
    m.image_extent = parse_number<std::size_t>(key, v);
  } else if (key == "input_channels") {
    m.input_channels = parse_number<std::size_t>(key, v);
  } else if (key == "m") {
    m.m = parse_number<std::size_t>(key, v);
  } else if (key == "alpha") {
    m.alpha = parse_number<double>(key, v);
  } else if (key == "overlap_ratio") {
    m.overlap_ratio = parse_number<double>(key, v);
  } else if (key == "overlap_pixels") {
    if (v == "none") {
      m.overlap_pixels.reset();
    } else {
      m.overlap_pixels = parse_number<std::size_t>(key, v);
    }
  } else if (key == "variant") {
    m.variant = parse_variant(v);
  } else if (key == "class_count") {
    m.class_count = parse_number<std::size_t>(key, v);
  } else if (key == "seed") {
    m.seed = parse_number<std::uint64_t>(key, v);
  } else if (key == "loss_balance") {
    m.loss_balance = parse_number<double>(key, v);
  } else if (key == "l2_lambda") {
    m.l2_lambda = parse_number<double>(key, v);
  } else if (key == "bypass_backbone") {
    m.bypass_backbone = detail::parse_bool(key, v);
  } else if (key == "epochs") {
    t.epochs = parse_number<std::size_t>(key, v);
  } else if (key == "batch_size") {
    t.batch_size = parse_number<std::size_t>(key, v);
  } else if (key == "learning_rate") {
    t.learning_rate = parse_number<double>(key, v);
  } else if (key == "lr_decay_per_epoch") {
    t.lr_decay_per_epoch = parse_number<double>(key, v);
  } else if (key == "horizontal_flip") {
    t.augmentation.horizontal_flip = detail::parse_bool(key, v);
  } else if (key == "random_crop") {
    t.augmentation.random_crop = detail::parse_bool(key, v);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

/// Parses config text into entries; syntax errors and unknown keys carry
/// the line number.
inline ConfigEntries parse_config_entries(const std::string& text) {
  ConfigEntries out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto& keys = config_keys();
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected 'key = value' at line " + std::to_string(lineno));
    }
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown key '" + key + "' at line " + std::to_string(lineno));
    }
    if (value.empty()) {
      throw ConfigError("missing value for key '" + key + "' at line " + std::to_string(lineno));
    }
    // Validate eagerly so the error carries the line number.
    try {
      RunConfig probe;
      apply_entry(probe, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " at line " + std::to_string(lineno));
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

/// Profile defaults first (profile from `profile_override`, else the file,
/// else paper), then file entries, then `overrides` in order.
inline RunConfig resolve_config(const ConfigEntries& file, const ConfigEntries& overrides = {},
                                std::optional<Profile> profile_override = std::nullopt) {
  Profile p = Profile::kPaper;
  for (const auto& [k, v] : file)
    if (k == "profile") p = parse_profile(v);
  if (profile_override) p = *profile_override;
  RunConfig rc = RunConfig::for_profile(p);
  for (const auto& [k, v] : file) apply_entry(rc, k, v);
  for (const auto& [k, v] : overrides) apply_entry(rc, k, v);
  return rc;
}

inline RunConfig parse_config_text(const std::string& text) {
  return resolve_config(parse_config_entries(text));
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RunConfig load_config(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

/// Canonical text of a model configuration; parse_config_text of the
/// result reproduces every field.
inline std::string model_config_text(const ModelConfig& m) {
  std::ostringstream os;
  os << "profile = " << to_string(m.profile) << '\n'
     << "image_extent = " << m.image_extent << '\n'
     << "input_channels = " << m.input_channels << '\n'
     << "m = " << m.m << '\n'
     << "alpha = " << detail::fmt_double(m.alpha) << '\n'
     << "overlap_ratio = " << detail::fmt_double(m.overlap_ratio) << '\n'
     << "overlap_pixels = "
     << (m.overlap_pixels ? std::to_string(*m.overlap_pixels) : std::string("none")) << '\n'
     << "variant = " << to_string(m.variant) << '\n'
     << "class_count = " << m.class_count << '\n'
     << "seed = " << m.seed << '\n'
     << "loss_balance = " << detail::fmt_double(m.loss_balance) << '\n'
     << "l2_lambda = " << detail::fmt_double(m.l2_lambda) << '\n'
     << "bypass_backbone = " << (m.bypass_backbone ? "true" : "false") << '\n';
  return os.str();
}

inline std::string train_config_text(const TrainConfig& t) {
  std::ostringstream os;
  os << "epochs = " << t.epochs << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "learning_rate = " << detail::fmt_double(t.learning_rate) << '\n'
     << "lr_decay_per_epoch = " << detail::fmt_double(t.lr_decay_per_epoch) << '\n'
     << "horizontal_flip = " << (t.augmentation.horizontal_flip ? "true" : "false") << '\n'
     << "random_crop = " << (t.augmentation.random_crop ? "true" : "false") << '\n';
  return os.str();
}

/// Fields that change the parameter set or the forward pass; the seed and
/// loss weights do not.
inline bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
  return a.profile == b.profile && a.image_extent == b.image_extent &&
         a.input_channels == b.input_channels && a.m == b.m && a.alpha == b.alpha &&
         a.overlap_ratio == b.overlap_ratio && a.overlap_pixels == b.overlap_pixels &&
         a.variant == b.variant && a.class_count == b.class_count &&
         a.bypass_backbone == b.bypass_backbone && a.widths == b.widths;
}

/// Names the first differing architecture field, or returns "".
inline std::string architecture_difference(const ModelConfig& a, const ModelConfig& b) {
  if (a.profile != b.profile) return "profile";
  if (a.image_extent != b.image_extent) return "image_extent";
  if (a.input_channels != b.input_channels) return "input_channels";
  if (a.m != b.m) return "m";
  if (a.alpha != b.alpha) return "alpha";
  if (a.overlap_ratio != b.overlap_ratio) return "overlap_ratio";
  if (a.overlap_pixels != b.overlap_pixels) return "overlap_pixels";
  if (a.variant != b.variant) return "variant";
  if (a.class_count != b.class_count) return "class_count";
  if (a.bypass_backbone != b.bypass_backbone) return "bypass_backbone";
  if (!(a.widths == b.widths)) return "widths";
  return "";
}

}  // namespace lnl
