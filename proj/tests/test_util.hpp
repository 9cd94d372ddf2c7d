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

// Shared oracles and fixtures for the unit tests.

#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "lnlatten/graph.hpp"

namespace lnl::testing {

inline Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(s));
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

/// Direct-loop convolution, HWC input and KhKwCinCout kernel.
inline Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>* b,
                                 std::size_t stride, bool same) {
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t kh = k.dim(0), kw = k.dim(1), cout = k.dim(3);
  const long pt = same ? static_cast<long>((kh - 1) / 2) : 0;
  const long pl = same ? static_cast<long>((kw - 1) / 2) : 0;
  const std::size_t ph = same ? h + kh - 1 : h, pw = same ? w + kw - 1 : w;
  const std::size_t ho = (ph - kh) / stride + 1, wo = (pw - kw) / stride + 1;
  Tensor<double> out(Shape{ho, wo, cout});
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox)
      for (std::size_t co = 0; co < cout; ++co) {
        double s = b ? (*b)[co] : 0.0;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            long iy = static_cast<long>(oy * stride + ky) - pt;
            long ix = static_cast<long>(ox * stride + kx) - pl;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
            for (std::size_t ci = 0; ci < cin; ++ci)
              s += x.at({static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci}) * k.at({ky, kx, ci, co});
          }
        out.at({oy, ox, co}) = s;
      }
  return out;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Central-difference gradient of a scalar function of one tensor.
template <typename F>
Tensor<double> numeric_grad(F f, Tensor<double> x, double h = 1e-6) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double max_rel_error(const Tensor<double>& analytic, const Tensor<double>& numeric) {
  double e = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    e = std::max(e, std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i])));
  return e;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lnlatten_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace lnl::testing
