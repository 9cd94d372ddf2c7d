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

// Tape-based reverse-mode differentiation over Tensor<T>.
//
// A Graph records every differentiable operation applied to Vars that
// require gradients. backward() walks the record in reverse exactly once,
// accumulating into leaf gradients. Leaves (parameters, inputs) live outside
// any Graph and may be shared by many graphs over their lifetime.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <string_view>
#include <utility>
#include <vector>

#include "lnlatten/tensor.hpp"

namespace lnl {

enum class OpKind {
  kConv2d,
  kMaxPool2d,
  kGridMaxPool,
  kUpsample2x,
  kRelu,
  kSigmoid,
  kSoftmax,
  kMatmul,
  kTranspose,
  kLinear,
  kReshape,
  kConcat,
  kAdd,
  kMul,
  kScale,
  kLerp,
  kSum,
  kSquaredNorm,
  kCrop,
  kRowL1Normalize,
  kColumnMean,
  kNll,
};

inline std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kMaxPool2d: return "maxpool2d";
    case OpKind::kGridMaxPool: return "grid_maxpool";
    case OpKind::kUpsample2x: return "upsample2x";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kLinear: return "linear";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcat: return "concat";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kLerp: return "lerp";
    case OpKind::kSum: return "sum";
    case OpKind::kSquaredNorm: return "squared_norm";
    case OpKind::kCrop: return "crop";
    case OpKind::kRowL1Normalize: return "row_l1_normalize";
    case OpKind::kColumnMean: return "column_mean";
    case OpKind::kNll: return "nll";
  }
  return "?";
}

enum class Padding { kSame, kNone };

namespace detail {
inline std::uint64_t next_var_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

template <typename T>
struct VarNode {
  std::uint64_t id = detail::next_var_id();
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool leaf = true;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape(), T(0));
    return grad;
  }
};

/// Shared handle to a value in (or feeding) a computation record.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<VarNode<T>> n) : n_(std::move(n)) {}

  const Tensor<T>& value() const { return n_->value; }
  Tensor<T>& value() { return n_->value; }
  const Shape& shape() const { return n_->value.shape(); }
  std::size_t size() const { return n_->value.size(); }

  bool has_grad() const { return !n_->grad.empty(); }
  const Tensor<T>& grad() const { return n_->grad; }
  Tensor<T>& grad_buffer() const { return n_->grad_buffer(); }
  void zero_grad() {
    if (!n_->grad.empty()) n_->grad.fill(T(0));
  }

  bool requires_grad() const { return n_->requires_grad; }
  bool is_leaf() const { return n_->leaf; }
  std::uint64_t id() const { return n_->id; }
  bool defined() const { return static_cast<bool>(n_); }

  VarNode<T>* node() const { return n_.get(); }
  const std::shared_ptr<VarNode<T>>& shared() const { return n_; }

 private:
  std::shared_ptr<VarNode<T>> n_;
};

/// Leaf that receives gradients (a parameter or a checked input).
template <typename T>
Var<T> make_param(Tensor<T> value) {
  auto n = std::make_shared<VarNode<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var<T>(std::move(n));
}

/// Leaf that never receives gradients.
template <typename T>
Var<T> make_const(Tensor<T> value) {
  auto n = std::make_shared<VarNode<T>>();
  n->value = std::move(value);
  return Var<T>(std::move(n));
}

/// One recorded operation.
struct RecordEntry {
  OpKind op;
  std::vector<std::uint64_t> inputs;
  std::uint64_t output;
};

template <typename T>
class Graph {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<Mat>;
  using CMapM = Eigen::Map<const Mat>;

  /// With recording disabled the graph is a plain evaluator.
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<RecordEntry>& record() const { return entries_; }

  void clear() {
    entries_.clear();
    backward_fns_.clear();
    outputs_.clear();
  }

  // ---------------------------------------------------------------- conv

  /// HWC input, KhKwCinCout kernels, optional Cout bias.
  Var<T> conv2d(const Var<T>& x, const Var<T>& k, const Var<T>* bias,
                std::size_t stride = 1, Padding pad = Padding::kSame) {
    const auto& xs = x.shape();
    const auto& ks = k.shape();
    if (xs.size() != 3 || ks.size() != 4) {
      throw DimensionError("conv2d expects HWC input and KhKwCinCout kernels, got " +
                           shape_str(xs) + " and " + shape_str(ks));
    }
    if (ks[2] != xs[2]) {
      throw DimensionError("conv2d channel mismatch: input " + shape_str(xs) +
                           " kernels " + shape_str(ks));
    }
    if (stride == 0) throw DimensionError("conv2d stride must be positive");
    ConvGeom g;
    g.h = xs[0];
    g.w = xs[1];
    g.cin = xs[2];
    g.kh = ks[0];
    g.kw = ks[1];
    g.cout = ks[3];
    g.stride = stride;
    g.pt = pad == Padding::kSame ? (g.kh - 1) / 2 : 0;
    g.pl = pad == Padding::kSame ? (g.kw - 1) / 2 : 0;
    std::size_t ph = g.h + (pad == Padding::kSame ? g.kh - 1 : 0);
    std::size_t pw = g.w + (pad == Padding::kSame ? g.kw - 1 : 0);
    if (g.kh > ph || g.kw > pw) {
      throw DimensionError("conv2d kernel " + shape_str(ks) +
                           " larger than padded input " + shape_str(xs));
    }
    g.ho = (ph - g.kh) / stride + 1;
    g.wo = (pw - g.kw) / stride + 1;
    if (bias && bias->size() != g.cout) {
      throw DimensionError("conv2d bias length mismatch");
    }

    Tensor<T> out(Shape{g.ho, g.wo, g.cout});
    const std::size_t rows = g.ho * g.wo;
    const std::size_t kcols = g.kh * g.kw * g.cin;
    MapM o(out.ptr(), rows, g.cout);
    CMapM km(k.value().ptr(), kcols, g.cout);
    if (g.pointwise()) {
      CMapM xm(x.value().ptr(), rows, g.cin);
      o.noalias() = xm * km;
    } else if (g.planar()) {
      planar_forward(g, x.value().ptr(), k.value().ptr(), out.ptr());
    } else {
      std::vector<T> cols(rows * kcols);
      im2col(g, x.value().ptr(), cols.data());
      CMapM cm(cols.data(), rows, kcols);
      o.noalias() = cm * km;
    }
    if (bias) {
      const T* b = bias->value().ptr();
      T* po = out.ptr();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < g.cout; ++c) po[r * g.cout + c] += b[c];
    }

    std::vector<Var<T>> ins{x, k};
    if (bias) ins.push_back(*bias);
    return emit(OpKind::kConv2d, ins, std::move(out),
                [g, x, k, b = bias ? *bias : Var<T>()](VarNode<T>& o) mutable {
                  const std::size_t rows = g.ho * g.wo;
                  const std::size_t kcols = g.kh * g.kw * g.cin;
                  CMapM go(o.grad.ptr(), rows, g.cout);
                  if (b.defined() && b.requires_grad()) {
                    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(
                        b.grad_buffer().ptr(), g.cout);
                    gb += go.colwise().sum();
                  }
                  CMapM km(k.value().ptr(), kcols, g.cout);
                  if (g.pointwise()) {
                    CMapM xm(x.value().ptr(), rows, g.cin);
                    if (k.requires_grad()) {
                      MapM gk(k.grad_buffer().ptr(), kcols, g.cout);
                      gk.noalias() += xm.transpose() * go;
                    }
                    if (x.requires_grad()) {
                      MapM gx(x.grad_buffer().ptr(), rows, g.cin);
                      gx.noalias() += go * km.transpose();
                    }
                    return;
                  }
                  if (g.planar()) {
                    planar_backward(g, x.value().ptr(), k.value().ptr(), o.grad.ptr(),
                                    x.requires_grad() ? x.grad_buffer().ptr() : nullptr,
                                    k.requires_grad() ? k.grad_buffer().ptr() : nullptr);
                    return;
                  }
                  std::vector<T> cols(rows * kcols);
                  if (k.requires_grad()) {
                    im2col(g, x.value().ptr(), cols.data());
                    CMapM cm(cols.data(), rows, kcols);
                    MapM gk(k.grad_buffer().ptr(), kcols, g.cout);
                    gk.noalias() += cm.transpose() * go;
                  }
                  if (x.requires_grad()) {
                    MapM gc(cols.data(), rows, kcols);
                    gc.noalias() = go * km.transpose();
                    col2im(g, cols.data(), x.grad_buffer().ptr());
                  }
                });
  }

  // ------------------------------------------------------------- pooling

  /// 2x2 window, stride 2, floor extents. Ties go to the first maximum in
  /// row-major window order.
  Var<T> maxpool2d(const Var<T>& x) {
    const auto& xs = x.shape();
    if (xs.size() != 3) throw DimensionError("maxpool2d expects HWC input");
    if (xs[0] < 2 || xs[1] < 2) {
      throw DimensionError("maxpool2d input " + shape_str(xs) +
                           " smaller than the 2x2 window");
    }
    const std::size_t h = xs[0], w = xs[1], c = xs[2];
    const std::size_t ho = h / 2, wo = w / 2;
    Tensor<T> out(Shape{ho, wo, c});
    std::vector<std::uint32_t> arg(ho * wo * c);
    const T* px = x.value().ptr();
    T* po = out.ptr();
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((2 * oy) * w + 2 * ox) * c + ch;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              std::size_t idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
              if (px[idx] > px[best]) best = idx;
            }
          }
          std::size_t o = (oy * wo + ox) * c + ch;
          po[o] = px[best];
          arg[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
    return emit(OpKind::kMaxPool2d, {x}, std::move(out),
                [x, arg = std::move(arg)](VarNode<T>& o) mutable {
                  scatter_argmax(x, arg, o.grad);
                });
  }

  /// Max over an n x n grid of (possibly overlapping) windows with bounds
  /// [floor(i*H/n), ceil((i+1)*H/n)).
  Var<T> grid_maxpool(const Var<T>& x, std::size_t n) {
    const auto& xs = x.shape();
    if (xs.size() != 3) throw DimensionError("grid_maxpool expects HWC input");
    if (n == 0 || n > xs[0] || n > xs[1]) {
      throw DimensionError("grid_maxpool: grid " + std::to_string(n) +
                           " does not fit input " + shape_str(xs));
    }
    const std::size_t h = xs[0], w = xs[1], c = xs[2];
    Tensor<T> out(Shape{n, n, c});
    std::vector<std::uint32_t> arg(n * n * c);
    const T* px = x.value().ptr();
    for (std::size_t gy = 0; gy < n; ++gy) {
      std::size_t y0 = gy * h / n, y1 = ((gy + 1) * h + n - 1) / n;
      for (std::size_t gx = 0; gx < n; ++gx) {
        std::size_t x0 = gx * w / n, x1 = ((gx + 1) * w + n - 1) / n;
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = (y0 * w + x0) * c + ch;
          for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t xx = x0; xx < x1; ++xx) {
              std::size_t idx = (y * w + xx) * c + ch;
              if (px[idx] > px[best]) best = idx;
            }
          std::size_t o = (gy * n + gx) * c + ch;
          out[o] = px[best];
          arg[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
    return emit(OpKind::kGridMaxPool, {x}, std::move(out),
                [x, arg = std::move(arg)](VarNode<T>& o) mutable {
                  scatter_argmax(x, arg, o.grad);
                });
  }

  /// Nearest-neighbour 2x upsampling of an HWC map.
  Var<T> upsample2x(const Var<T>& x) {
    const auto& xs = x.shape();
    if (xs.size() != 3) throw DimensionError("upsample2x expects HWC input");
    const std::size_t h = xs[0], w = xs[1], c = xs[2];
    Tensor<T> out(Shape{2 * h, 2 * w, c});
    const T* px = x.value().ptr();
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        std::memcpy(out.ptr() + (y * 2 * w + xx) * c,
                    px + ((y / 2) * w + xx / 2) * c, c * sizeof(T));
    return emit(OpKind::kUpsample2x, {x}, std::move(out),
                [x, h, w, c](VarNode<T>& o) mutable {
                  if (!x.requires_grad()) return;
                  T* gx = x.grad_buffer().ptr();
                  const T* go = o.grad.ptr();
                  for (std::size_t y = 0; y < 2 * h; ++y)
                    for (std::size_t xx = 0; xx < 2 * w; ++xx) {
                      T* d = gx + ((y / 2) * w + xx / 2) * c;
                      const T* s = go + (y * 2 * w + xx) * c;
                      for (std::size_t ch = 0; ch < c; ++ch) d[ch] += s[ch];
                    }
                });
  }

  /// Spatial window [y0, y0+h) x [x0, x0+w) of an HWC map.
  Var<T> crop(const Var<T>& x, std::size_t y0, std::size_t x0, std::size_t h,
              std::size_t w) {
    const auto& xs = x.shape();
    if (xs.size() != 3 || y0 + h > xs[0] || x0 + w > xs[1]) {
      throw DimensionError("crop window outside input " + shape_str(xs));
    }
    const std::size_t W = xs[1], c = xs[2];
    Tensor<T> out(Shape{h, w, c});
    for (std::size_t y = 0; y < h; ++y)
      std::memcpy(out.ptr() + y * w * c, x.value().ptr() + ((y0 + y) * W + x0) * c,
                  w * c * sizeof(T));
    return emit(OpKind::kCrop, {x}, std::move(out),
                [x, y0, x0, h, w, W, c](VarNode<T>& o) mutable {
                  if (!x.requires_grad()) return;
                  T* gx = x.grad_buffer().ptr();
                  const T* go = o.grad.ptr();
                  for (std::size_t y = 0; y < h; ++y) {
                    T* d = gx + ((y0 + y) * W + x0) * c;
                    const T* s = go + y * w * c;
                    for (std::size_t i = 0; i < w * c; ++i) d[i] += s[i];
                  }
                });
  }

  // --------------------------------------------------------- elementwise

  Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.vec()) v = v > T(0) ? v : T(0);
    return emit(OpKind::kRelu, {x}, std::move(out), [x](VarNode<T>& o) mutable {
      if (!x.requires_grad()) return;
      T* gx = x.grad_buffer().ptr();
      const T* go = o.grad.ptr();
      const T* v = o.value.ptr();
      for (std::size_t i = 0; i < o.value.size(); ++i)
        if (v[i] > T(0)) gx[i] += go[i];
    });
  }

  Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.vec()) {
      if (v >= T(0)) {
        v = T(1) / (T(1) + std::exp(-v));
      } else {
        T e = std::exp(v);
        v = e / (T(1) + e);
      }
    }
    return emit(OpKind::kSigmoid, {x}, std::move(out),
                [x](VarNode<T>& o) mutable {
                  if (!x.requires_grad()) return;
                  T* gx = x.grad_buffer().ptr();
                  const T* go = o.grad.ptr();
                  const T* s = o.value.ptr();
                  for (std::size_t i = 0; i < o.value.size(); ++i)
                    gx[i] += go[i] * s[i] * (T(1) - s[i]);
                });
  }

  /// Softmax along the last axis.
  Var<T> softmax(const Var<T>& x) {
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.size() / n;
    Tensor<T> out = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
      T* p = out.ptr() + r * n;
      T m = *std::max_element(p, p + n);
      T z = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = std::exp(p[i] - m);
        z += p[i];
      }
      for (std::size_t i = 0; i < n; ++i) p[i] /= z;
    }
    return emit(OpKind::kSoftmax, {x}, std::move(out),
                [x, n, rows](VarNode<T>& o) mutable {
                  if (!x.requires_grad()) return;
                  T* gx = x.grad_buffer().ptr();
                  for (std::size_t r = 0; r < rows; ++r) {
                    const T* p = o.value.ptr() + r * n;
                    const T* go = o.grad.ptr() + r * n;
                    T dot = T(0);
                    for (std::size_t i = 0; i < n; ++i) dot += p[i] * go[i];
                    for (std::size_t i = 0; i < n; ++i)
                      gx[r * n + i] += p[i] * (go[i] - dot);
                  }
                });
  }

  Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return emit(OpKind::kAdd, {a, b}, std::move(out),
                [a, b](VarNode<T>& o) mutable {
                  accumulate(a, o.grad, T(1));
                  accumulate(b, o.grad, T(1));
                });
  }

  Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "mul");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return emit(OpKind::kMul, {a, b}, std::move(out),
                [a, b](VarNode<T>& o) mutable {
                  const std::size_t n = o.value.size();
                  if (a.requires_grad()) {
                    T* ga = a.grad_buffer().ptr();
                    for (std::size_t i = 0; i < n; ++i)
                      ga[i] += o.grad[i] * b.value()[i];
                  }
                  if (b.requires_grad()) {
                    T* gb = b.grad_buffer().ptr();
                    for (std::size_t i = 0; i < n; ++i)
                      gb[i] += o.grad[i] * a.value()[i];
                  }
                });
  }

  Var<T> scale(const Var<T>& x, T c) {
    Tensor<T> out = x.value();
    for (auto& v : out.vec()) v *= c;
    return emit(OpKind::kScale, {x}, std::move(out),
                [x, c](VarNode<T>& o) mutable { accumulate(x, o.grad, c); });
  }

  /// (1 - t) * a + t * b, returning a or b bit-exactly at t = 0 or t = 1.
  Var<T> lerp(const Var<T>& a, const Var<T>& b, T t) {
    require_same_shape(a, b, "lerp");
    Tensor<T> out;
    if (t == T(0)) {
      out = a.value();
    } else if (t == T(1)) {
      out = b.value();
    } else {
      out = a.value();
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (T(1) - t) * a.value()[i] + t * b.value()[i];
    }
    return emit(OpKind::kLerp, {a, b}, std::move(out),
                [a, b, t](VarNode<T>& o) mutable {
                  if (t != T(1)) accumulate(a, o.grad, T(1) - t);
                  if (t != T(0)) accumulate(b, o.grad, t);
                });
  }

  // ------------------------------------------------------------- shaping

  Var<T> reshape(const Var<T>& x, Shape s) {
    Tensor<T> out = x.value().reshaped(std::move(s));
    return emit(OpKind::kReshape, {x}, std::move(out),
                [x](VarNode<T>& o) mutable { accumulate(x, o.grad, T(1)); });
  }

  Var<T> flatten(const Var<T>& x) { return reshape(x, Shape{x.size()}); }

  /// Concatenate along `axis`; all other extents must agree.
  Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
    if (xs.empty()) throw DimensionError("concat of nothing");
    Shape s = xs[0].shape();
    if (axis >= s.size()) throw DimensionError("concat axis out of range");
    std::size_t total = 0;
    for (const auto& v : xs) {
      const auto& vs = v.shape();
      bool ok = vs.size() == s.size();
      for (std::size_t d = 0; ok && d < s.size(); ++d)
        if (d != axis && vs[d] != s[d]) ok = false;
      if (!ok) {
        throw DimensionError("concat extents disagree: " + shape_str(s) +
                             " vs " + shape_str(vs));
      }
      total += vs[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    s[axis] = total;
    Tensor<T> out(s);
    std::vector<std::size_t> spans;
    std::size_t off = 0;
    for (const auto& v : xs) {
      std::size_t span = v.shape()[axis] * inner;
      spans.push_back(span);
      for (std::size_t o = 0; o < outer; ++o)
        std::memcpy(out.ptr() + o * total * inner + off,
                    v.value().ptr() + o * span, span * sizeof(T));
      off += span;
    }
    return emit(OpKind::kConcat, xs, std::move(out),
                [xs, spans, outer, row = total * inner](VarNode<T>& o) mutable {
                  std::size_t off = 0;
                  for (std::size_t i = 0; i < xs.size(); ++i) {
                    if (xs[i].requires_grad()) {
                      T* g = xs[i].grad_buffer().ptr();
                      for (std::size_t r = 0; r < outer; ++r) {
                        const T* src = o.grad.ptr() + r * row + off;
                        T* dst = g + r * spans[i];
                        for (std::size_t j = 0; j < spans[i]; ++j) dst[j] += src[j];
                      }
                    }
                    off += spans[i];
                  }
                });
  }

  // -------------------------------------------------------- linear algebra

  Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
      throw DimensionError("matmul shape mismatch " + shape_str(as) + " x " +
                           shape_str(bs));
    }
    const std::size_t m = as[0], k = as[1], n = bs[1];
    Tensor<T> out(Shape{m, n});
    MapM(out.ptr(), m, n).noalias() =
        CMapM(a.value().ptr(), m, k) * CMapM(b.value().ptr(), k, n);
    return emit(OpKind::kMatmul, {a, b}, std::move(out),
                [a, b, m, k, n](VarNode<T>& o) mutable {
                  CMapM go(o.grad.ptr(), m, n);
                  if (a.requires_grad()) {
                    MapM(a.grad_buffer().ptr(), m, k).noalias() +=
                        go * CMapM(b.value().ptr(), k, n).transpose();
                  }
                  if (b.requires_grad()) {
                    MapM(b.grad_buffer().ptr(), k, n).noalias() +=
                        CMapM(a.value().ptr(), m, k).transpose() * go;
                  }
                });
  }

  Var<T> transpose(const Var<T>& a) {
    const auto& as = a.shape();
    if (as.size() != 2) throw DimensionError("transpose expects a matrix");
    const std::size_t m = as[0], n = as[1];
    Tensor<T> out(Shape{n, m});
    MapM(out.ptr(), n, m) = CMapM(a.value().ptr(), m, n).transpose();
    return emit(OpKind::kTranspose, {a}, std::move(out),
                [a, m, n](VarNode<T>& o) mutable {
                  if (!a.requires_grad()) return;
                  MapM(a.grad_buffer().ptr(), m, n) +=
                      CMapM(o.grad.ptr(), n, m).transpose();
                });
  }

  /// Fully-connected layer: flatten(x) (length in) * w (in x out) + b.
  Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>* b) {
    const auto& ws = w.shape();
    if (ws.size() != 2 || ws[0] != x.size()) {
      throw DimensionError("linear: input length " + std::to_string(x.size()) +
                           " does not match weights " + shape_str(ws));
    }
    const std::size_t in = ws[0], outn = ws[1];
    if (b && b->size() != outn) throw DimensionError("linear bias mismatch");
    Tensor<T> out(Shape{outn});
    using RowV = Eigen::Matrix<T, 1, Eigen::Dynamic>;
    Eigen::Map<RowV> ov(out.ptr(), outn);
    ov.noalias() = Eigen::Map<const RowV>(x.value().ptr(), in) *
                   CMapM(w.value().ptr(), in, outn);
    if (b) ov += Eigen::Map<const RowV>(b->value().ptr(), outn);
    std::vector<Var<T>> ins{x, w};
    if (b) ins.push_back(*b);
    return emit(OpKind::kLinear, ins, std::move(out),
                [x, w, bb = b ? *b : Var<T>(), in, outn](VarNode<T>& o) mutable {
                  using RowV = Eigen::Matrix<T, 1, Eigen::Dynamic>;
                  Eigen::Map<const RowV> go(o.grad.ptr(), outn);
                  if (bb.defined() && bb.requires_grad())
                    Eigen::Map<RowV>(bb.grad_buffer().ptr(), outn) += go;
                  if (w.requires_grad()) {
                    MapM(w.grad_buffer().ptr(), in, outn).noalias() +=
                        Eigen::Map<const RowV>(x.value().ptr(), in).transpose() * go;
                  }
                  if (x.requires_grad()) {
                    Eigen::Map<RowV>(x.grad_buffer().ptr(), in).noalias() +=
                        go * CMapM(w.value().ptr(), in, outn).transpose();
                  }
                });
  }

  // ----------------------------------------------------------- reductions

  Var<T> sum(const Var<T>& x) {
    Tensor<T> out = Tensor<T>::scalar(x.value().sum());
    return emit(OpKind::kSum, {x}, std::move(out), [x](VarNode<T>& o) mutable {
      if (!x.requires_grad()) return;
      T g = o.grad[0];
      for (auto& v : x.grad_buffer().vec()) v += g;
    });
  }

  Var<T> squared_norm(const Var<T>& x) {
    T s = T(0);
    for (auto v : x.value().vec()) s += v * v;
    return emit(OpKind::kSquaredNorm, {x}, Tensor<T>::scalar(s),
                [x](VarNode<T>& o) mutable {
                  if (!x.requires_grad()) return;
                  T g = T(2) * o.grad[0];
                  T* gx = x.grad_buffer().ptr();
                  for (std::size_t i = 0; i < x.size(); ++i)
                    gx[i] += g * x.value()[i];
                });
  }

  /// r[i][j] = |a[i][j]| / sum_j |a[i][j]|. An all-zero row maps to the
  /// uniform row and passes no gradient.
  Var<T> row_l1_normalize(const Var<T>& a) {
    const auto& as = a.shape();
    if (as.size() != 2) throw DimensionError("row_l1_normalize expects a matrix");
    const std::size_t m = as[0], n = as[1];
    Tensor<T> out(Shape{m, n});
    std::vector<T> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
      T s = T(0);
      for (std::size_t j = 0; j < n; ++j) s += std::abs(a.value()[i * n + j]);
      norms[i] = s;
      for (std::size_t j = 0; j < n; ++j)
        out[i * n + j] = s > T(0) ? std::abs(a.value()[i * n + j]) / s
                                  : T(1) / static_cast<T>(n);
    }
    return emit(OpKind::kRowL1Normalize, {a}, std::move(out),
                [a, m, n, norms = std::move(norms)](VarNode<T>& o) mutable {
                  if (!a.requires_grad()) return;
                  T* ga = a.grad_buffer().ptr();
                  for (std::size_t i = 0; i < m; ++i) {
                    if (norms[i] <= T(0)) continue;
                    const T* r = o.value.ptr() + i * n;
                    const T* go = o.grad.ptr() + i * n;
                    T dot = T(0);
                    for (std::size_t j = 0; j < n; ++j) dot += go[j] * r[j];
                    for (std::size_t k = 0; k < n; ++k) {
                      T v = a.value()[i * n + k];
                      T sgn = v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
                      ga[i * n + k] += sgn * (go[k] - dot) / norms[i];
                    }
                  }
                });
  }

  /// Mean over rows: m x n -> n.
  Var<T> column_mean(const Var<T>& a) {
    const auto& as = a.shape();
    if (as.size() != 2) throw DimensionError("column_mean expects a matrix");
    const std::size_t m = as[0], n = as[1];
    Tensor<T> out(Shape{n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += a.value()[i * n + j];
    for (auto& v : out.vec()) v /= static_cast<T>(m);
    return emit(OpKind::kColumnMean, {a}, std::move(out),
                [a, m, n](VarNode<T>& o) mutable {
                  if (!a.requires_grad()) return;
                  T* ga = a.grad_buffer().ptr();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                      ga[i * n + j] += o.grad[j] / static_cast<T>(m);
                });
  }

  /// -log(max(p[label], floor)). `clamped` reports whether the floor hit.
  Var<T> nll(const Var<T>& probs, std::size_t label, T floor = T(1e-12),
             bool* clamped = nullptr) {
    if (label >= probs.size()) {
      throw DimensionError("label " + std::to_string(label) +
                           " outside probability vector of length " +
                           std::to_string(probs.size()));
    }
    T p = probs.value()[label];
    bool hit = !(p > floor);
    if (clamped) *clamped = hit;
    T v = -std::log(hit ? floor : p);
    return emit(OpKind::kNll, {probs}, Tensor<T>::scalar(v),
                [probs, label, p, hit](VarNode<T>& o) mutable {
                  if (hit || !probs.requires_grad()) return;
                  probs.grad_buffer()[label] -= o.grad[0] / p;
                });
  }

  // ------------------------------------------------------------- backward

  /// Accumulates d(loss)/d(leaf) into every reachable leaf that requires
  /// gradients. Intermediate gradients are reset on each call.
  void backward(const Var<T>& loss) {
    if (loss.size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " +
                          shape_str(loss.shape()));
    }
    if (!recording_) throw ContractError("backward on a non-recording graph");
    for (auto& o : outputs_) o->grad = Tensor<T>();
    if (!loss.requires_grad()) return;
    VarNode<T>* ln = loss.node();
    if (ln->leaf) {
      ln->grad_buffer()[0] += T(1);
      return;
    }
    ln->grad_buffer()[0] = T(1);
    for (std::size_t i = entries_.size(); i-- > 0;) {
      VarNode<T>& o = *outputs_[i];
      if (o.grad.empty()) continue;
      backward_fns_[i](o);
    }
  }

 private:
  struct ConvGeom {
    std::size_t h, w, cin, kh, kw, cout, stride, pt, pl, ho, wo;
    bool pointwise() const {
      return kh == 1 && kw == 1 && stride == 1 && pt == 0 && pl == 0;
    }
    // Narrow layers run as direct convolution over channel planes; the
    // im2col GEMM degenerates when one matrix side is a handful of columns.
    bool planar() const { return stride == 1 && cin * cout <= 256; }
  };

  // Channel planes zero-padded to (ph, pw). With a shared row pitch of pw,
  // every kernel tap becomes one contiguous multiply-add over the plane; the
  // columns past wo are scratch.
  struct PlanarGeom {
    std::size_t ph, pw, len;
  };

  static PlanarGeom planar_geom(const ConvGeom& g) {
    PlanarGeom p;
    p.ph = (g.ho - 1) + g.kh;
    p.pw = (g.wo - 1) + g.kw;
    p.len = (g.ho - 1) * p.pw + g.wo;
    return p;
  }

  static std::vector<T> pad_planes(const ConvGeom& g, const PlanarGeom& p, const T* x) {
    std::vector<T> out(g.cin * p.ph * p.pw, T(0));
    for (std::size_t y = 0; y < g.h; ++y)
      for (std::size_t xx = 0; xx < g.w; ++xx)
        for (std::size_t c = 0; c < g.cin; ++c)
          out[(c * p.ph + y + g.pt) * p.pw + xx + g.pl] = x[(y * g.w + xx) * g.cin + c];
    return out;
  }

  static std::vector<T> pitch_planes(const ConvGeom& g, const PlanarGeom& p, const T* go) {
    std::vector<T> out(g.cout * g.ho * p.pw, T(0));
    for (std::size_t y = 0; y < g.ho; ++y)
      for (std::size_t xx = 0; xx < g.wo; ++xx)
        for (std::size_t c = 0; c < g.cout; ++c)
          out[(c * g.ho + y) * p.pw + xx] = go[(y * g.wo + xx) * g.cout + c];
    return out;
  }

  using RowMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
  using CRowMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

  static void planar_forward(const ConvGeom& g, const T* x, const T* kern, T* out) {
    const PlanarGeom p = planar_geom(g);
    std::vector<T> xp = pad_planes(g, p, x);
    std::vector<T> op(g.cout * g.ho * p.pw, T(0));
    for (std::size_t co = 0; co < g.cout; ++co) {
      RowMap dst(op.data() + co * g.ho * p.pw, p.len);
      for (std::size_t ky = 0; ky < g.kh; ++ky)
        for (std::size_t kx = 0; kx < g.kw; ++kx)
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const T kv = kern[((ky * g.kw + kx) * g.cin + ci) * g.cout + co];
            dst += kv * CRowMap(xp.data() + (ci * p.ph + ky) * p.pw + kx, p.len);
          }
    }
    for (std::size_t y = 0; y < g.ho; ++y)
      for (std::size_t xx = 0; xx < g.wo; ++xx)
        for (std::size_t c = 0; c < g.cout; ++c)
          out[(y * g.wo + xx) * g.cout + c] += op[(c * g.ho + y) * p.pw + xx];
  }

  static void planar_backward(const ConvGeom& g, const T* x, const T* kern, const T* go,
                              T* gx, T* gk) {
    const PlanarGeom p = planar_geom(g);
    std::vector<T> gop = pitch_planes(g, p, go);
    if (gk) {
      std::vector<T> xp = pad_planes(g, p, x);
      for (std::size_t co = 0; co < g.cout; ++co) {
        CRowMap src(gop.data() + co * g.ho * p.pw, p.len);
        for (std::size_t ky = 0; ky < g.kh; ++ky)
          for (std::size_t kx = 0; kx < g.kw; ++kx)
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              gk[((ky * g.kw + kx) * g.cin + ci) * g.cout + co] +=
                  (src * CRowMap(xp.data() + (ci * p.ph + ky) * p.pw + kx, p.len)).sum();
            }
      }
    }
    if (gx) {
      std::vector<T> gxp(g.cin * p.ph * p.pw, T(0));
      for (std::size_t co = 0; co < g.cout; ++co) {
        CRowMap src(gop.data() + co * g.ho * p.pw, p.len);
        for (std::size_t ky = 0; ky < g.kh; ++ky)
          for (std::size_t kx = 0; kx < g.kw; ++kx)
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              const T kv = kern[((ky * g.kw + kx) * g.cin + ci) * g.cout + co];
              RowMap(gxp.data() + (ci * p.ph + ky) * p.pw + kx, p.len) += kv * src;
            }
      }
      for (std::size_t y = 0; y < g.h; ++y)
        for (std::size_t xx = 0; xx < g.w; ++xx)
          for (std::size_t c = 0; c < g.cin; ++c)
            gx[(y * g.w + xx) * g.cin + c] += gxp[(c * p.ph + y + g.pt) * p.pw + xx + g.pl];
    }
  }


  static void im2col(const ConvGeom& g, const T* x, T* cols) {
    const std::size_t kcols = g.kh * g.kw * g.cin;
    for (std::size_t oy = 0; oy < g.ho; ++oy) {
      for (std::size_t ox = 0; ox < g.wo; ++ox) {
        T* row = cols + (oy * g.wo + ox) * kcols;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pt);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pl);
            T* dst = row + (ky * g.kw + kx) * g.cin;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) ||
                ix >= static_cast<long>(g.w)) {
              std::memset(dst, 0, g.cin * sizeof(T));
            } else {
              std::memcpy(dst, x + (iy * g.w + ix) * g.cin, g.cin * sizeof(T));
            }
          }
        }
      }
    }
  }

  static void col2im(const ConvGeom& g, const T* cols, T* gx) {
    const std::size_t kcols = g.kh * g.kw * g.cin;
    for (std::size_t oy = 0; oy < g.ho; ++oy) {
      for (std::size_t ox = 0; ox < g.wo; ++ox) {
        const T* row = cols + (oy * g.wo + ox) * kcols;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pt);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pl);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            const T* src = row + (ky * g.kw + kx) * g.cin;
            T* dst = gx + (iy * g.w + ix) * g.cin;
            for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }

  static void scatter_argmax(const Var<T>& x, const std::vector<std::uint32_t>& arg,
                             const Tensor<T>& go) {
    if (!x.requires_grad()) return;
    T* gx = x.grad_buffer().ptr();
    for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += go[i];
  }

  static void accumulate(const Var<T>& x, const Tensor<T>& g, T c) {
    if (!x.requires_grad()) return;
    T* gx = x.grad_buffer().ptr();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  }

  static void require_same_shape(const Var<T>& a, const Var<T>& b,
                                 const char* op) {
    if (a.shape() != b.shape()) {
      throw DimensionError(std::string(op) + " shape mismatch " +
                           shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }

  Var<T> emit(OpKind op, const std::vector<Var<T>>& inputs, Tensor<T> out,
              std::function<void(VarNode<T>&)> fn) {
    if (!out.all_finite()) {
      throw NumericalError(std::string("non-finite output from ") +
                           std::string(op_name(op)));
    }
    auto node = std::make_shared<VarNode<T>>();
    node->value = std::move(out);
    node->leaf = false;
    bool needs = false;
    for (const auto& v : inputs) needs = needs || v.requires_grad();
    if (!recording_ || !needs) return Var<T>(std::move(node));
    node->requires_grad = true;
    RecordEntry e{op, {}, node->id};
    e.inputs.reserve(inputs.size());
    for (const auto& v : inputs) e.inputs.push_back(v.id());
    entries_.push_back(std::move(e));
    backward_fns_.push_back(std::move(fn));
    outputs_.push_back(node);
    return Var<T>(std::move(node));
  }

  bool recording_;
  std::vector<RecordEntry> entries_;
  std::vector<std::function<void(VarNode<T>&)>> backward_fns_;
  std::vector<std::shared_ptr<VarNode<T>>> outputs_;
};

}  // namespace lnl
