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

// Checkpoint layout, all integers little-endian:
//
//   "LNLCKPT\0"  u32 version  u32 precision (32 | 64)
//   u32 config length, config text (model_config_text)
//   u32 block count, then per block:
//     u32 name length, name, u32 rank, u64 dims[rank], values
//   u64 FNV-1a of every preceding byte

#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "lnlatten/config_io.hpp"
#include "lnlatten/io.hpp"
#include "lnlatten/model.hpp"

namespace lnl {

inline constexpr char kCheckpointMagic[8] = {'L', 'N', 'L', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParamBlock {
  std::string name;
  Shape shape;
  std::vector<double> values;  ///< widened from the stored precision
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint32_t precision = 32;
  std::string config_text;
  ModelConfig config;
  std::vector<ParamBlock> blocks;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& b, std::size_t end) : b_(b), end_(end) {}
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw DataError("checkpoint truncated");
  }
  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serialises every parameter of the model at the given storage precision.
template <typename T>
std::string checkpoint_bytes(const Model<T>& model, std::uint32_t precision = 32) {
  if (precision != 32 && precision != 64) throw ContractError("precision must be 32 or 64");
  std::string s(kCheckpointMagic, 8);
  detail::put_u32(s, kCheckpointVersion);
  detail::put_u32(s, precision);
  const std::string cfg = model_config_text(model.config());
  detail::put_u32(s, static_cast<std::uint32_t>(cfg.size()));
  s += cfg;
  const auto& params = model.params().all();
  detail::put_u32(s, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_u32(s, static_cast<std::uint32_t>(p.name.size()));
    s += p.name;
    const auto& shape = p.var.shape();
    detail::put_u32(s, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) detail::put_u64(s, d);
    for (T v : p.var.value().vec()) {
      if (precision == 32) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32(s, bits);
      } else {
        double d = static_cast<double>(v);
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        detail::put_u64(s, bits);
      }
    }
  }
  detail::put_u64(s, fnv1a64(s.data(), s.size()));
  return s;
}

inline Checkpoint parse_checkpoint(const std::string& b) {
  if (b.size() < 8 + 8 || std::memcmp(b.data(), kCheckpointMagic, 8) != 0) {
    throw DataError("not a checkpoint (bad magic)");
  }
  const std::size_t body = b.size() - 8;
  detail::Reader tail(b, b.size());
  tail.bytes(body);
  if (tail.uint(8) != fnv1a64(b.data(), body)) throw DataError("checkpoint checksum mismatch");
  detail::Reader r(b, body);
  r.bytes(8);
  Checkpoint c;
  c.version = static_cast<std::uint32_t>(r.uint(4));
  if (c.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(c.version));
  }
  c.precision = static_cast<std::uint32_t>(r.uint(4));
  if (c.precision != 32 && c.precision != 64) {
    throw DataError("unsupported checkpoint precision " + std::to_string(c.precision));
  }
  c.config_text = r.bytes(r.uint(4));
  try {
    c.config = parse_config_text(c.config_text).model;
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  const auto count = r.uint(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    ParamBlock blk;
    blk.name = r.bytes(r.uint(4));
    const auto rank = r.uint(4);
    for (std::uint64_t k = 0; k < rank; ++k) blk.shape.push_back(r.uint(8));
    const std::size_t n = shape_size(blk.shape);
    r.need(n * (c.precision / 8));
    blk.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (c.precision == 32) {
        auto bits = static_cast<std::uint32_t>(r.uint(4));
        float f;
        std::memcpy(&f, &bits, 4);
        blk.values[k] = f;
      } else {
        auto bits = r.uint(8);
        double d;
        std::memcpy(&d, &bits, 8);
        blk.values[k] = d;
      }
    }
    c.blocks.push_back(std::move(blk));
  }
  if (r.pos() != body) throw DataError("trailing bytes in checkpoint");
  return c;
}

/// Copies checkpoint values into a model; rejects architecture mismatch.
template <typename T>
void load_parameters(Model<T>& model, const Checkpoint& c) {
  if (auto diff = architecture_difference(model.config(), c.config); !diff.empty()) {
    throw ConfigError("checkpoint was written for a different model configuration (field '" +
                      diff + "')");
  }
  auto& params = model.params().all();
  if (params.size() != c.blocks.size()) {
    throw DataError("checkpoint has " + std::to_string(c.blocks.size()) + " parameter blocks, model has " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& blk = c.blocks[i];
    if (blk.name != params[i].name || blk.shape != params[i].var.shape()) {
      throw DataError("checkpoint block " + blk.name + " " + shape_str(blk.shape) +
                      " does not match parameter " + params[i].name + " " +
                      shape_str(params[i].var.shape()));
    }
    auto& dst = params[i].var.value();
    for (std::size_t k = 0; k < blk.values.size(); ++k) dst[k] = static_cast<T>(blk.values[k]);
  }
}

template <typename T>
void save_checkpoint(const fs::path& path, const Model<T>& model, std::uint32_t precision = 32) {
  atomic_write(path, checkpoint_bytes(model, precision));
}

inline Checkpoint read_checkpoint(const fs::path& path) { return parse_checkpoint(read_file(path)); }

/// Builds a model from the configuration stored in the checkpoint.
template <typename T>
Model<T> load_model(const fs::path& path) {
  Checkpoint c = read_checkpoint(path);
  Model<T> m(c.config);
  load_parameters(m, c);
  return m;
}

}  // namespace lnl
