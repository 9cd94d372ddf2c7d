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

// Weight tracing, occlusion and parameter sweeps on top of train/evaluate.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lnlatten/train.hpp"

namespace lnl {

// ---------------------------------------------------------------- trace

struct WeightTrace {
  /// series[i][t] = w^g_i at iteration t.
  std::vector<std::vector<double>> series;
  /// Mean over regions of the temporal variance inside the first and last
  /// tenth of the iterations.
  double first_decile_variance = 0.0;
  double last_decile_variance = 0.0;
  /// Variance across regions at the first iteration.
  double initial_region_variance = 0.0;
};

inline double variance(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  if (hi <= lo) return 0.0;
  double mean = 0.0;
  for (std::size_t i = lo; i < hi; ++i) mean += v[i];
  mean /= static_cast<double>(hi - lo);
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += (v[i] - mean) * (v[i] - mean);
  return s / static_cast<double>(hi - lo);
}

inline WeightTrace trace_weights(const TrainRecord& rec) {
  if (rec.iterations.empty()) throw ContractError("trace_weights: empty record");
  const std::size_t t = rec.iterations.size();
  const std::size_t m = rec.iterations.front().wg.size();
  WeightTrace w;
  w.series.assign(m, std::vector<double>(t));
  for (std::size_t k = 0; k < t; ++k) {
    if (rec.iterations[k].wg.size() != m) throw DataError("trace_weights: ragged record");
    for (std::size_t i = 0; i < m; ++i) w.series[i][k] = rec.iterations[k].wg[i];
  }
  const std::size_t d = std::max<std::size_t>(1, t / 10);
  for (std::size_t i = 0; i < m; ++i) {
    w.first_decile_variance += variance(w.series[i], 0, d) / static_cast<double>(m);
    w.last_decile_variance += variance(w.series[i], t - d, t) / static_cast<double>(m);
  }
  w.initial_region_variance = variance(rec.iterations.front().wg, 0, m);
  return w;
}

/// Mean w^g over planted cells and over the remaining cells.
struct RegionSplit {
  double planted_mean = 0.0;
  double other_mean = 0.0;
};

inline RegionSplit split_by_cells(const std::vector<double>& wg, const std::vector<std::size_t>& planted) {
  RegionSplit r;
  std::size_t np = 0, no = 0;
  for (std::size_t i = 0; i < wg.size(); ++i) {
    if (std::find(planted.begin(), planted.end(), i) != planted.end()) {
      r.planted_mean += wg[i];
      ++np;
    } else {
      r.other_mean += wg[i];
      ++no;
    }
  }
  if (np) r.planted_mean /= static_cast<double>(np);
  if (no) r.other_mean /= static_cast<double>(no);
  return r;
}

/// Per-image predictions over a dataset, plus the mean w^g.
struct Inspection {
  std::vector<Prediction> predictions;
  std::vector<double> mean_wg;
};

template <typename T>
Inspection inspect(const Model<T>& model, const Dataset& data, std::size_t threads = 1) {
  Inspection r;
  r.predictions.resize(data.size());
  detail::parallel_chunks(data.size(), threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) r.predictions[i] = predict(model, to_tensor<T>(data.images[i]));
  });
  r.mean_wg.assign(model.config().m, 0.0);
  for (const auto& p : r.predictions)
    for (std::size_t i = 0; i < p.wg.size(); ++i) r.mean_wg[i] += p.wg[i] / static_cast<double>(data.size());
  return r;
}

// ------------------------------------------------------------ occlusion

/// Zeroes every pixel covered by patch `j` of the layout.
template <typename T>
Tensor<T> occlude_patch(const Tensor<T>& image, const PatchLayout& layout, std::size_t j) {
  if (j >= layout.m) throw ConfigError("patch index " + std::to_string(j) + " >= m = " + std::to_string(layout.m));
  Tensor<T> out = image;
  const std::size_t w = image.dim(1), c = image.dim(2);
  const std::size_t y0 = layout.origin(j / layout.n), x0 = layout.origin(j % layout.n);
  for (std::size_t y = y0; y < y0 + layout.patch_size; ++y)
    for (std::size_t x = x0; x < x0 + layout.patch_size; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out[(y * w + x) * c + ch] = T(0);
  return out;
}

/// True when patches a and b of the layout share at least one pixel.
inline bool patches_overlap(const PatchLayout& l, std::size_t a, std::size_t b) {
  auto span_overlap = [&](std::size_t i, std::size_t k) {
    const std::size_t lo = std::max(l.origin(i), l.origin(k));
    const std::size_t hi = std::min(l.origin(i), l.origin(k)) + l.patch_size;
    return lo < hi;
  };
  return span_overlap(a / l.n, b / l.n) && span_overlap(a % l.n, b % l.n);
}

struct OcclusionResult {
  std::optional<std::size_t> patch;
  std::vector<double> gates_before;
  std::vector<double> gates_after;
  /// Other patches whose gate decreased, and whether each overlaps `patch`.
  std::vector<std::size_t> neighbours_decreased;
  std::vector<bool> overlaps;
};

/// Runs the model on the image and on the image with `patch` zeroed;
/// an empty `patch` occludes nothing.
template <typename T>
OcclusionResult occlusion_experiment(const Model<T>& model, const Tensor<T>& image,
                                     std::optional<std::size_t> patch) {
  const auto& layout = model.geometry().layout;
  OcclusionResult r;
  r.patch = patch;
  r.gates_before = predict(model, image).gates;
  Tensor<T> occluded = patch ? occlude_patch(image, layout, *patch) : image;
  r.gates_after = predict(model, occluded).gates;
  r.overlaps.assign(layout.m, false);
  if (patch) {
    for (std::size_t i = 0; i < layout.m; ++i) {
      r.overlaps[i] = i != *patch && patches_overlap(layout, i, *patch);
      if (i != *patch && r.gates_after[i] < r.gates_before[i]) r.neighbours_decreased.push_back(i);
    }
  }
  return r;
}

// ----------------------------------------------------------------- sweep

enum class SweepParam { kAlpha, kM, kOverlapPixels };

inline SweepParam parse_sweep_param(const std::string& s) {
  if (s == "alpha") return SweepParam::kAlpha;
  if (s == "m") return SweepParam::kM;
  if (s == "overlap_pixels") return SweepParam::kOverlapPixels;
  throw ConfigError("sweep parameter must be one of {alpha, m, overlap_pixels}, got '" + s + "'");
}

inline std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::kAlpha: return "alpha";
    case SweepParam::kM: return "m";
    case SweepParam::kOverlapPixels: return "overlap_pixels";
  }
  return "?";
}

inline std::vector<double> default_sweep_values(SweepParam p) {
  switch (p) {
    case SweepParam::kAlpha: return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    case SweepParam::kM: return {4, 9, 16, 25, 36};
    case SweepParam::kOverlapPixels: return {4, 8, 12, 16, 20, 24};
  }
  return {};
}

struct SweepRow {
  double value = 0.0;
  bool ok = false;
  double accuracy = 0.0;
  std::string reason;
};

inline ModelConfig with_sweep_value(ModelConfig cfg, SweepParam p, double v) {
  switch (p) {
    case SweepParam::kAlpha:
      cfg.alpha = v;
      break;
    case SweepParam::kM:
      cfg.m = static_cast<std::size_t>(v);
      break;
    case SweepParam::kOverlapPixels:
      cfg.overlap_pixels = static_cast<std::size_t>(v);
      break;
  }
  return cfg;
}

/// Trains one model per value; configurations that fail validation are
/// skipped with the reason recorded.
template <typename T>
std::vector<SweepRow> sweep(SweepParam p, const std::vector<double>& values, const ModelConfig& base,
                            const TrainConfig& tc, const Dataset& train_set, const Dataset& test_set,
                            std::size_t threads = 1) {
  std::vector<SweepRow> rows;
  for (double v : values) {
    SweepRow row;
    row.value = v;
    ModelConfig cfg = with_sweep_value(base, p, v);
    try {
      derive_geometry(cfg);
    } catch (const ConfigError& e) {
      row.reason = e.what();
      rows.push_back(row);
      continue;
    }
    Model<T> model(cfg);
    TrainOptions opt;
    opt.threads = threads;
    train(model, tc, train_set, opt);
    row.accuracy = evaluate(model, test_set, threads).accuracy;
    row.ok = true;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace lnl
