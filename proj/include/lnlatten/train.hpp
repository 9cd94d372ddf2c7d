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

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "lnlatten/dataset.hpp"
#include "lnlatten/model.hpp"
#include "lnlatten/optim.hpp"

namespace lnl {

/// Rows are true classes, columns predictions.
struct Confusion {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;

  Confusion() = default;
  explicit Confusion(std::size_t c) : classes(c), counts(c * c, 0) {}

  std::size_t& at(std::size_t truth, std::size_t pred) { return counts.at(truth * classes + pred); }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts.at(truth * classes + pred); }

  std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
  std::size_t trace() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < classes; ++i) t += at(i, i);
    return t;
  }
  std::size_t row_sum(std::size_t truth) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < classes; ++j) s += at(truth, j);
    return s;
  }
  double accuracy() const {
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
  }

  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct IterationRecord {
  std::size_t iter = 0;
  std::size_t epoch = 0;
  double loss_entropy = 0.0;
  double loss_l2 = 0.0;
  double acc = 0.0;
  /// Batch mean of w^g.
  std::vector<double> wg;
  // Invariant diagnostics, worst case over the batch.
  double r_row_error = 0.0;   ///< max |row sum of R - 1|
  double wg_sum_error = 0.0;  ///< max |sum w^g - 1|
  double gate_min = 1.0;
  double gate_max = 0.0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double test_accuracy = 0.0;
  Confusion confusion;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainRecord {
  std::size_t m = 0;
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> epochs;

  friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

struct TrainOptions {
  std::size_t threads = 1;
  /// Evaluated after every epoch when set.
  const Dataset* test = nullptr;
  /// Called after every iteration; useful for progress output.
  std::function<void(const IterationRecord&)> on_iteration;
};

/// splitmix64 step, used to derive independent per-sample streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Horizontal flip with probability 1/2; random crop after reflective
/// padding by `pad` pixels.
template <typename T>
Tensor<T> augment(const Tensor<T>& img, const Augmentation& aug, std::uint64_t seed,
                  std::size_t pad = 8) {
  if (!aug.horizontal_flip && !aug.random_crop) return img;
  std::mt19937_64 rng(seed);
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  bool flip = aug.horizontal_flip && std::bernoulli_distribution(0.5)(rng);
  long dy = 0, dx = 0;
  if (aug.random_crop) {
    std::uniform_int_distribution<long> off(-static_cast<long>(pad), static_cast<long>(pad));
    dy = off(rng);
    dx = off(rng);
  }
  auto reflect = [](long i, long n) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return static_cast<std::size_t>(i);
  };
  Tensor<T> out(img.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t sy = reflect(static_cast<long>(y) + dy, static_cast<long>(h));
      std::size_t sx = reflect(static_cast<long>(x) + dx, static_cast<long>(w));
      if (flip) sx = w - 1 - sx;
      for (std::size_t ch = 0; ch < c; ++ch) out[(y * w + x) * c + ch] = img[(sy * w + sx) * c + ch];
    }
  }
  return out;
}

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probs;
  std::vector<double> wg;
  std::vector<double> gates;
};

template <typename T>
Prediction predict(const Model<T>& model, const Tensor<T>& image) {
  Graph<T> g(false);
  auto r = model.forward(g, image);
  Prediction p;
  for (auto v : r.probs.value().vec()) p.probs.push_back(static_cast<double>(v));
  p.label = argmax(p.probs);
  p.wg = r.wg();
  p.gates = r.gates();
  return p;
}

namespace detail {

/// Runs f(i) for i in [0, n) over `threads` contiguous chunks.
inline void parallel_chunks(std::size_t n, std::size_t threads,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& f) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    f(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = n * t / threads, hi = n * (t + 1) / threads;
    pool.emplace_back([&, t, lo, hi] {
      try {
        f(t, lo, hi);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

struct EvalResult {
  double accuracy = 0.0;
  Confusion confusion;
  std::vector<std::size_t> predictions;
};

/// Accuracy and confusion over a dataset, without augmentation.
template <typename T>
EvalResult evaluate(const Model<T>& model, const Dataset& data, std::size_t threads = 1) {
  const std::size_t classes = model.config().class_count;
  if (data.class_count() != classes) {
    throw DataError("dataset has " + std::to_string(data.class_count()) +
                    " classes, model expects " + std::to_string(classes));
  }
  EvalResult r;
  r.confusion = Confusion(classes);
  r.predictions.assign(data.size(), 0);
  detail::parallel_chunks(data.size(), threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      r.predictions[i] = predict(model, to_tensor<T>(data.images[i])).label;
  });
  for (std::size_t i = 0; i < data.size(); ++i) ++r.confusion.at(data.labels[i], r.predictions[i]);
  r.accuracy = r.confusion.accuracy();
  return r;
}

namespace detail {

struct SampleStats {
  double entropy = 0.0;
  bool correct = false;
  std::vector<double> wg;
  double r_row_error = 0.0;
  double wg_sum_error = 0.0;
  double gate_min = 1.0, gate_max = 0.0;
};

template <typename T>
SampleStats sample_step(const Model<T>& model, const Tensor<T>& image, std::size_t label,
                        T weight) {
  Graph<T> g;
  auto r = model.forward(g, image);
  Var<T> nll = g.nll(r.probs, label);
  SampleStats s;
  s.entropy = static_cast<double>(nll.value().item());
  std::vector<double> probs;
  for (auto v : r.probs.value().vec()) probs.push_back(static_cast<double>(v));
  s.correct = argmax(probs) == label;
  s.wg = r.wg();
  double total = 0.0;
  for (double w : s.wg) total += w;
  s.wg_sum_error = std::abs(total - 1.0);
  if (r.nonlocal.r.defined()) {
    const auto& rv = r.nonlocal.r.value();
    const std::size_t m = rv.dim(0);
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) row += static_cast<double>(rv[i * m + j]);
      s.r_row_error = std::max(s.r_row_error, std::abs(row - 1.0));
    }
  }
  for (double gv : r.gates()) {
    s.gate_min = std::min(s.gate_min, gv);
    s.gate_max = std::max(s.gate_max, gv);
  }
  g.backward(g.scale(nll, weight));
  return s;
}

template <typename T>
bool grads_finite(const ParamStore<T>& store) {
  for (const auto& p : store.all())
    if (p.var.has_grad() && !p.var.grad().all_finite()) return false;
  return true;
}

}  // namespace detail

/// Mini-batch training with Adam and per-epoch learning-rate decay.
/// Deterministic for a fixed seed and thread count.
template <typename T>
TrainRecord train(Model<T>& model, const TrainConfig& tc, const Dataset& data,
                  const TrainOptions& opt = {}) {
  tc.validate();
  const auto& mc = model.config();
  data.validate(mc.image_extent, mc.input_channels);
  if (data.class_count() != mc.class_count) {
    throw DataError("dataset has " + std::to_string(data.class_count()) +
                    " classes, config expects " + std::to_string(mc.class_count));
  }
  const std::size_t threads = std::max<std::size_t>(1, opt.threads);
  std::vector<Model<T>> replicas;
  for (std::size_t t = 1; t < threads; ++t) replicas.push_back(model.clone());

  std::vector<Tensor<T>> images;
  images.reserve(data.size());
  for (const auto& im : data.images) images.push_back(to_tensor<T>(im));

  Adam<T> adam(model.params());
  const LossConfig lc = LossConfig::from(mc);
  TrainRecord rec;
  rec.m = mc.m;
  std::mt19937_64 order_rng(mix_seed(mc.seed, 0x5eed));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t iter = 0;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.lr_at_epoch(epoch);
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size, ++iter) {
      const std::size_t bs = std::min(tc.batch_size, order.size() - start);
      const T weight = T(1) / static_cast<T>(bs);
      model.params().zero_grad();
      for (auto& r : replicas) {
        r.copy_parameters_from(model);
        r.params().zero_grad();
      }
      std::vector<detail::SampleStats> stats(bs);
      try {
        detail::parallel_chunks(bs, threads, [&](std::size_t t, std::size_t lo, std::size_t hi) {
          const Model<T>& worker = t == 0 ? model : replicas[t - 1];
          for (std::size_t b = lo; b < hi; ++b) {
            const std::size_t idx = order[start + b];
            Tensor<T> x = augment(images[idx], tc.augmentation, mix_seed(mc.seed ^ epoch, idx));
            stats[b] = detail::sample_step(worker, x, data.labels[idx], weight);
          }
        });
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at iteration " + std::to_string(iter), static_cast<long>(iter));
      }
      for (auto& r : replicas) {
        auto& dst = model.params().all();
        const auto& src = r.params().all();
        for (std::size_t i = 0; i < dst.size(); ++i) {
          if (!src[i].var.has_grad()) continue;
          auto& gd = dst[i].var.grad_buffer();
          const auto& gs = src[i].var.grad();
          for (std::size_t j = 0; j < gd.size(); ++j) gd[j] += gs[j];
        }
      }
      double l2 = 0.0;
      {
        Graph<T> g;
        Var<T> term = l2_term(g, model.params(), lc);
        l2 = static_cast<double>(term.value().item());
        if (term.requires_grad()) g.backward(term);
      }
      IterationRecord ir;
      ir.iter = iter;
      ir.epoch = epoch;
      ir.loss_l2 = l2;
      ir.wg.assign(mc.m, 0.0);
      std::size_t correct = 0;
      for (const auto& s : stats) {
        ir.loss_entropy += s.entropy / static_cast<double>(bs);
        correct += s.correct;
        for (std::size_t i = 0; i < mc.m; ++i) ir.wg[i] += s.wg[i] / static_cast<double>(bs);
        ir.r_row_error = std::max(ir.r_row_error, s.r_row_error);
        ir.wg_sum_error = std::max(ir.wg_sum_error, s.wg_sum_error);
        ir.gate_min = std::min(ir.gate_min, s.gate_min);
        ir.gate_max = std::max(ir.gate_max, s.gate_max);
      }
      ir.acc = static_cast<double>(correct) / static_cast<double>(bs);
      if (!std::isfinite(ir.loss_entropy + ir.loss_l2) || !detail::grads_finite(model.params())) {
        throw NumericalError("non-finite loss or gradient at iteration " + std::to_string(iter),
                             static_cast<long>(iter));
      }
      adam.step(model.params(), lr);
      if (opt.on_iteration) opt.on_iteration(ir);
      rec.iterations.push_back(std::move(ir));
    }
    if (opt.test) {
      EpochRecord er;
      er.epoch = epoch;
      er.learning_rate = lr;
      auto ev = evaluate(model, *opt.test, threads);
      er.test_accuracy = ev.accuracy;
      er.confusion = ev.confusion;
      rec.epochs.push_back(std::move(er));
    }
  }
  return rec;
}

}  // namespace lnl
