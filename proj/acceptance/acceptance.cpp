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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Pass criterion numbers to run a subset.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lnlatten/checkpoint.hpp"
#include "lnlatten/experiments.hpp"
#include "lnlatten/gradcheck_suite.hpp"
#include "lnlatten/synth.hpp"

namespace fs = std::filesystem;
using namespace lnl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ------------------------------------------------------------ shared runs

constexpr std::size_t kSeeds = 5;
constexpr std::size_t kEpochs = 8;
constexpr std::size_t kLongEpochs = 23;

const SynthSplit& synth_data() {
  static const SynthSplit split = [] {
    SynthOptions o;
    o.class_count = 3;
    o.samples_per_class = 300;
    o.distractors = false;
    o.seed = 2024;
    return synth_dataset(o);
  }();
  return split;
}

TrainConfig synth_train_config(std::size_t epochs) {
  TrainConfig tc = TrainConfig::for_profile(Profile::kTiny);
  tc.epochs = epochs;
  tc.augmentation = {false, false};
  return tc;
}

struct Run {
  std::optional<Model<float>> model;
  TrainRecord record;
  double accuracy = 0.0;
  double seconds = 0.0;
};

Run train_run(Variant v, std::uint64_t seed, std::size_t epochs) {
  const auto& data = synth_data();
  ModelConfig mc = ModelConfig::for_profile(Profile::kTiny);
  mc.class_count = 3;
  mc.variant = v;
  mc.seed = seed;
  Run r;
  r.model.emplace(mc);
  auto t0 = Clock::now();
  r.record = train(*r.model, synth_train_config(epochs), data.train);
  r.seconds = seconds_since(t0);
  r.accuracy = evaluate(*r.model, data.test).accuracy;
  std::fprintf(stderr, "  trained %s seed %llu: %zu iterations, accuracy %.4f, %.1f s\n", to_string(v).c_str(),
               static_cast<unsigned long long>(seed), r.record.iterations.size(), r.accuracy, r.seconds);
  return r;
}

Run& cached_run(Variant v, std::uint64_t seed) {
  static std::map<std::pair<int, std::uint64_t>, Run> runs;
  auto key = std::make_pair(static_cast<int>(v), seed);
  auto it = runs.find(key);
  if (it == runs.end()) it = runs.emplace(key, train_run(v, seed, kEpochs)).first;
  return it->second;
}

Run& long_run() {
  static Run r = train_run(Variant::kFull, 1, kLongEpochs);
  return r;
}

// ------------------------------------------------------------- criteria

Verdict gradient_suite_check() {
  auto t0 = Clock::now();
  auto entries = gradient_suite(1);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& e : entries) {
    if (e.result.max_rel_error >= worst) {
      worst = e.result.max_rel_error;
      worst_name = e.name;
    }
    if (!(e.result.max_rel_error < 1e-4)) failed += " " + e.name;
  }
  bool has_model = false;
  for (const auto& e : entries) has_model = has_model || e.name == "tiny_model";
  Verdict v;
  v.pass = failed.empty() && has_model && secs < 120.0;
  v.detail = fmt("%zu checks, worst %.3e (%s), limit 1e-4; %.1f s of 120 s", entries.size(), worst,
                 worst_name.c_str(), secs);
  if (!failed.empty()) v.detail += "; failed:" + failed;
  return v;
}

Verdict shape_check() {
  std::vector<std::string> bad;
  auto expect = [&](const std::string& what, const Shape& got, const Shape& want) {
    if (got != want) bad.push_back(what + " " + shape_str(got) + " != " + shape_str(want));
  };
  auto expect_n = [&](const std::string& what, std::size_t got, std::size_t want) {
    if (got != want) bad.push_back(what + " " + std::to_string(got) + " != " + std::to_string(want));
  };
  ModelConfig cfg = ModelConfig::for_profile(Profile::kPaper);
  const Geometry geo = derive_geometry(cfg);
  expect_n("bottleneck", geo.bottleneck, 9);
  expect_n("grid", geo.grid, 4);
  expect("simple chain", Shape(geo.simple_chain.begin(), geo.simple_chain.end()), Shape{24, 12, 6});
  expect_n("gate conv", geo.gate_mid, 4);
  expect_n("gate pool", geo.gate_out, 2);
  expect_n("gate flat", geo.gate_flat, 256);
  expect_n("global", geo.global_dim, 8192);
  expect_n("local", geo.local_dim, 9216);
  expect_n("fused", geo.fused_dim, 17408);

  Model<float> model(cfg);
  auto param = [&](const std::string& name) {
    const auto* p = model.params().find(name);
    if (!p) throw ContractError("no parameter " + name);
    return p->var.shape();
  };
  expect("gate fc1", param("local0.gate.fc1.w"), Shape{256, 64});
  expect("gate fc2", param("local0.gate.fc2.w"), Shape{64, 1});
  expect("head fc1", param("head.fc1.w"), Shape{17408, 2048});

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor<float> image(Shape{144, 144, 3});
  for (auto& x : image.vec()) x = u(rng);
  Graph<float> g(false);
  auto r = model.forward(g, image);
  expect("F5", r.backbone.f5.shape(), Shape{9, 9, 512});
  expect("F9", r.backbone.f9.shape(), Shape{144, 144, 64});
  expect("pooled grid", g.maxpool2d(r.backbone.f5).shape(), Shape{4, 4, 512});
  expect("s", r.nonlocal.s.shape(), Shape{16, 512});
  expect("R", r.nonlocal.r.shape(), Shape{16, 16});
  expect("g", r.nonlocal.g.shape(), Shape{8192});
  expect("g*", r.nonlocal.g_star.shape(), Shape{8192});
  expect_n("patches", r.local.features.size(), 16);
  for (const auto& f : r.local.features) expect("branch feature", f.shape(), Shape{9216});
  for (const auto& w : r.local.gates) expect("gate", w.shape(), Shape{1});
  expect("f_en", r.local.f_en.shape(), Shape{9216});
  expect("probs", r.probs.shape(), Shape{cfg.class_count});
  const auto& branch = model.local().branch(0);
  Tensor<float> patch(Shape{48, 48, 64});
  for (auto& x : patch.vec()) x = u(rng);
  auto sn = branch.simple_net_forward(g, make_const(patch));
  expect("SimpleNet out", sn.shape(), Shape{6, 6, 256});
  expect("gate out", branch.local_gate(g, sn).shape(), Shape{1});

  Verdict v;
  v.pass = bad.empty();
  v.detail = v.pass ? "9x9x512 -> 4x4x512, 48 -> 24 -> 12 -> 6x6x256, 6 -> 4 -> 2 -> 256 -> 64 -> 1, 8192 + 9216 = 17408"
                    : bad.front() + (bad.size() > 1 ? fmt(" (+%zu more)", bad.size() - 1) : "");
  return v;
}

Verdict normalization_check() {
  const Run& run = long_run();
  double row = 0.0, sum = 0.0, gmin = 1.0, gmax = 0.0;
  for (const auto& it : run.record.iterations) {
    row = std::max(row, it.r_row_error);
    sum = std::max(sum, it.wg_sum_error);
    gmin = std::min(gmin, it.gate_min);
    gmax = std::max(gmax, it.gate_max);
  }
  const std::size_t n = run.record.iterations.size();
  Verdict v;
  v.pass = n >= 1000 && row <= 1e-6 && sum <= 1e-6 && gmin > 0.0 && gmax < 1.0;
  v.detail = fmt("%zu iterations; max |row sum - 1| %.2e, max |sum wg - 1| %.2e (limit 1e-6); gates in [%.6g, %.9g]",
                 n, row, sum, gmin, gmax);
  return v;
}

Verdict mix_check() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ModelConfig cfg = ModelConfig::for_profile(Profile::kTiny);
  cfg.seed = 5;
  Model<double> model(cfg);
  const auto& geo = model.geometry();
  Tensor<double> f5(Shape{geo.bottleneck, geo.bottleneck, cfg.widths.unet[4]});
  for (auto& x : f5.vec()) x = std::abs(u(rng));
  Graph<double> g(false);
  auto at = [&](double a) { return model.nonlocal().forward(g, make_const(f5), a); };
  auto o0 = at(0.0), o1 = at(1.0);
  const bool lim0 = o0.g_star.value().vec() == o0.g.value().vec();
  const bool lim1 = o1.g_star.value().vec() == o1.s.value().vec();
  double lin = 0.0;
  for (double a : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    auto o = at(a);
    const auto& gv = o0.g.value();
    const auto& sv = o1.s.value();
    for (std::size_t i = 0; i < gv.size(); ++i)
      lin = std::max(lin, std::abs(o.g_star.value()[i] - ((1.0 - a) * gv[i] + a * sv[i])));
  }
  Verdict v;
  v.pass = lim0 && lim1 && lin <= 1e-12;
  v.detail = fmt("alpha=0 %s, alpha=1 %s, linearity error %.2e at 5 probes (limit 1e-12)",
                 lim0 ? "bitwise g" : "differs from g", lim1 ? "bitwise flatten(s)" : "differs from flatten(s)", lin);
  return v;
}

Verdict layout_check() {
  std::vector<std::string> bad;
  PatchLayout l = plan_patches(144, 16, 1.0 / 3.0);
  if (l.patch_size != 48 || l.overlap != 16 || l.stride != 32) {
    bad.push_back(fmt("(144, 16, 1/3) gave patch %zu overlap %zu stride %zu", l.patch_size, l.overlap, l.stride));
  }
  for (std::size_t ov : {4, 8, 12, 16, 20, 24}) {
    try {
      PatchLayout s = plan_patches_by_overlap(144, 16, ov);
      if (s.n * s.patch_size - (s.n - 1) * s.overlap != 144 || s.origin(s.n - 1) + s.patch_size != 144) {
        bad.push_back(fmt("overlap %zu does not tile", ov));
      }
    } catch (const ConfigError& e) {
      bad.push_back(fmt("overlap %zu rejected: %s", ov, e.what()));
    }
  }
  std::string diag;
  try {
    plan_patches(144, 16, 0.3);
    bad.push_back("ratio 0.3 accepted");
  } catch (const ConfigError& e) {
    diag = e.what();
    if (diag.find("nearest feasible") == std::string::npos) bad.push_back("ratio 0.3 diagnostic lacks alternatives");
  }
  Verdict v;
  v.pass = bad.empty();
  v.detail = v.pass ? "patch 48 overlap 16 stride 32; overlaps 4..24 tile 144; ratio 0.3 rejected: " + diag
                    : bad.front();
  return v;
}

Verdict enhancement_check() {
  const auto& data = synth_data();
  const double inv_m = 1.0 / 4.0;
  std::size_t good = 0;
  bool acc_ok = true, time_ok = true;
  std::string per_seed;
  for (std::uint64_t s = 1; s <= kSeeds; ++s) {
    Run& run = cached_run(Variant::kFull, s);
    auto ins = inspect(*run.model, data.test);
    auto split = split_by_cells(ins.mean_wg, data.test.planted_cells);
    const bool ok = split.planted_mean > inv_m && split.planted_mean > split.other_mean;
    good += ok;
    acc_ok = acc_ok && run.accuracy >= 0.90;
    time_ok = time_ok && run.seconds < 20 * 60;
    per_seed += fmt(" [%llu: acc %.3f, planted %.4f, other %.4f%s]", static_cast<unsigned long long>(s),
                    run.accuracy, split.planted_mean, split.other_mean, ok ? "" : " x");
  }
  Verdict v;
  v.pass = acc_ok && time_ok && good >= 4;
  v.detail = fmt("%zu/%zu seeds with planted w^g above 1/M and the rest; %zu epochs;", good, kSeeds, kEpochs) + per_seed;
  return v;
}

Verdict ablation_check() {
  std::map<Variant, double> mean;
  for (Variant var : {Variant::kFull, Variant::kModelNonLocal, Variant::kModelLocal, Variant::kModelS}) {
    double a = 0.0;
    for (std::uint64_t s = 1; s <= kSeeds; ++s) a += cached_run(var, s).accuracy / kSeeds;
    mean[var] = a;
  }
  const double tol = 0.01;
  const double full = mean[Variant::kFull], nl = mean[Variant::kModelNonLocal], lo = mean[Variant::kModelLocal],
               ms = mean[Variant::kModelS];
  Verdict v;
  v.pass = full + tol >= nl && full + tol >= lo && ms <= std::min({full, nl, lo}) + tol;
  v.detail = fmt("mean accuracy full %.4f, model_nonlocal %.4f, model_local %.4f, model_s %.4f (band 0.01)", full,
                 nl, lo, ms);
  return v;
}

Verdict occlusion_check() {
  const auto& data = synth_data();
  const Model<float>& model = *cached_run(Variant::kFull, 1).model;
  const std::size_t m = model.config().m;
  const auto& planted = data.test.planted_cells;
  const std::size_t n = std::min<std::size_t>(100, data.test.size());
  // Occluders cover the cells that carry content; the sweep over every
  // patch is reported alongside.
  std::size_t reduced = 0, reduced_any = 0;
  bool identical = true;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> img = to_tensor<float>(data.test.images[i]);
    const std::size_t j = planted[i % planted.size()];
    auto r = occlusion_experiment(model, img, j);
    reduced += r.gates_after[j] < r.gates_before[j];
    auto any = occlusion_experiment(model, img, i % m);
    reduced_any += any.gates_after[i % m] < any.gates_before[i % m];
    auto none = occlusion_experiment(model, img, std::nullopt);
    auto a = predict(model, img), b = predict(model, img);
    identical = identical && none.gates_after == none.gates_before && a.probs == b.probs && a.wg == b.wg;
  }
  const double frac = static_cast<double>(reduced) / static_cast<double>(n);
  Verdict v;
  v.pass = frac >= 0.80 && identical;
  v.detail = fmt("occluded content patch gate dropped in %zu/%zu images (%.0f%%, need 80%%; any patch: %zu/%zu); "
                 "empty occlusion %s",
                 reduced, n, 100.0 * frac, reduced_any, n, identical ? "bitwise identical" : "changed the output");
  return v;
}

Verdict trace_check() {
  const Run& run = long_run();
  WeightTrace t = trace_weights(run.record);
  Verdict v;
  v.pass = t.last_decile_variance < t.first_decile_variance;
  v.detail = fmt("%zu iterations, accuracy %.3f; per-region variance first decile %.3e, last decile %.3e",
                 run.record.iterations.size(), run.accuracy, t.first_decile_variance, t.last_decile_variance);
  return v;
}

Verdict determinism_check() {
  SynthOptions o;
  o.samples_per_class = 20;
  o.seed = 77;
  auto data = synth_dataset(o);
  ModelConfig mc = ModelConfig::for_profile(Profile::kTiny);
  mc.class_count = 3;
  mc.seed = 9;
  TrainConfig tc = TrainConfig::for_profile(Profile::kTiny);
  tc.epochs = 2;
  tc.batch_size = 6;
  std::vector<std::string> bad;
  for (std::size_t threads : {1, 2}) {
    TrainOptions opt;
    opt.threads = threads;
    Model<float> a(mc), b(mc);
    auto ra = train(a, tc, data.train, opt);
    auto rb = train(b, tc, data.train, opt);
    if (!(ra == rb)) bad.push_back(fmt("record differs with %zu threads", threads));
    if (checkpoint_bytes(a) != checkpoint_bytes(b)) bad.push_back(fmt("parameters differ with %zu threads", threads));
  }
  Model<float> a(mc);
  train(a, tc, data.train);
  fs::path dir = fs::temp_directory_path() / "lnlatten_acceptance";
  fs::remove_all(dir);
  save_checkpoint(dir / "a.lnl", a);
  Model<float> b = load_model<float>(dir / "a.lnl");
  save_checkpoint(dir / "b.lnl", b);
  if (read_file(dir / "a.lnl") != read_file(dir / "b.lnl")) bad.push_back("checkpoint re-save differs");
  for (const auto& img : data.test.images) {
    auto pa = predict(a, to_tensor<float>(img));
    auto pb = predict(b, to_tensor<float>(img));
    if (pa.probs != pb.probs || pa.wg != pb.wg || pa.gates != pb.gates) {
      bad.push_back("reloaded model predicts differently");
      break;
    }
  }
  fs::remove_all(dir);
  Verdict v;
  v.pass = bad.empty();
  v.detail = v.pass ? "records bitwise equal at 1 and 2 threads; checkpoint round-trip and eval bit-exact" : bad.front();
  return v;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient suite", gradient_suite_check},
      {2, "shape ledger", shape_check},
      {3, "normalization invariants", normalization_check},
      {4, "mixing limits", mix_check},
      {5, "patch layouts", layout_check},
      {6, "crucial-region enhancement", enhancement_check},
      {7, "ablation trend", ablation_check},
      {8, "occlusion robustness", occlusion_check},
      {9, "weight-evolution trace", trace_check},
      {10, "determinism and round-trips", determinism_check},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Verdict v;
    auto t0 = Clock::now();
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("error: ") + e.what();
    }
    std::printf("AC%-2d %s  %-28s %s (%.1f s)\n", c.id, v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
