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

// lnlatten: train, evaluate and inspect local/non-local attention models.
//
// Exit status: 0 success, 1 configuration error, 2 data error,
// 3 numerical failure (non-finite loss, failed gradient check).

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lnlatten/artifacts.hpp"
#include "lnlatten/checkpoint.hpp"
#include "lnlatten/config_io.hpp"
#include "lnlatten/experiments.hpp"
#include "lnlatten/gradcheck_suite.hpp"
#include "lnlatten/synth.hpp"

namespace {

using namespace lnl;

struct Flags {
  std::string config;
  std::string data;
  std::string out = ".";
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<double> alpha;
  std::optional<std::size_t> patches;
  std::optional<std::size_t> overlap_pixels;
  std::optional<std::string> profile;
  std::optional<std::size_t> threads;
  // sweep
  std::string param = "alpha";
  std::vector<double> values;
  // occlude / inspect
  std::size_t limit = 100;
  // synth-data
  std::size_t classes = 3;
  std::size_t per_class = 300;
  bool verbose = false;
};

std::size_t thread_count(const Flags& f) {
  if (f.threads) return std::max<std::size_t>(1, *f.threads);
  if (const char* env = std::getenv("LNL_THREADS")) {
    try {
      return std::max<std::size_t>(1, std::stoul(env));
    } catch (const std::exception&) {
      throw ConfigError("LNL_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
  }
  return 1;
}

/// Config file, then command-line overrides. `data` may supply the class
/// count when neither the file nor the flags fix it.
RunConfig run_config(const Flags& f, const Dataset* data = nullptr) {
  ConfigEntries file;
  if (!f.config.empty()) file = parse_config_entries(read_text_file(f.config));
  ConfigEntries over;
  if (f.seed) over.emplace_back("seed", std::to_string(*f.seed));
  if (f.variant) over.emplace_back("variant", *f.variant);
  if (f.alpha) over.emplace_back("alpha", detail::fmt_double(*f.alpha));
  if (f.patches) over.emplace_back("m", std::to_string(*f.patches));
  if (f.overlap_pixels) over.emplace_back("overlap_pixels", std::to_string(*f.overlap_pixels));
  std::optional<Profile> prof;
  if (f.profile) prof = parse_profile(*f.profile);
  bool fixed_classes = false;
  for (const auto& [k, v] : file) fixed_classes = fixed_classes || k == "class_count";
  if (data && !fixed_classes) over.emplace_back("class_count", std::to_string(data->class_count()));
  RunConfig rc = resolve_config(file, over, prof);
  derive_geometry(rc.model);
  rc.train.validate();
  return rc;
}

struct DataSplit {
  Dataset train;
  std::optional<Dataset> test;
};

/// A root with train/ and test/ subdirectories is a split; otherwise the
/// whole tree is one set.
DataSplit load_split(const std::string& root) {
  if (root.empty()) throw ConfigError("--data is required");
  DataSplit s;
  fs::path r(root);
  if (fs::is_directory(r / "train") && fs::is_directory(r / "test")) {
    s.train = load_dataset(r / "train");
    s.test = load_dataset(r / "test");
    if (s.test->class_names != s.train.class_names) throw DataError("train and test class directories differ");
  } else {
    s.train = load_dataset(r);
  }
  return s;
}

/// The evaluation set: test/ of a split, else the whole tree.
Dataset eval_set(const std::string& root) {
  DataSplit s = load_split(root);
  return s.test ? *s.test : s.train;
}

fs::path checkpoint_path(const Flags& f) {
  return f.checkpoint.empty() ? fs::path(f.out) / "checkpoint.lnl" : fs::path(f.checkpoint);
}

Model<float> load_checked(const Flags& f, const Dataset& data) {
  Checkpoint c = read_checkpoint(checkpoint_path(f));
  if (!f.config.empty() || f.variant || f.patches || f.overlap_pixels || f.profile) {
    RunConfig rc = run_config(f, &data);
    if (auto diff = architecture_difference(rc.model, c.config); !diff.empty()) {
      throw ConfigError("checkpoint was written for a different model configuration (field '" + diff + "')");
    }
  }
  Model<float> model(c.config);
  load_parameters(model, c);
  data.validate(c.config.image_extent, c.config.input_channels);
  if (data.class_count() != c.config.class_count) {
    throw DataError("dataset has " + std::to_string(data.class_count()) + " classes, checkpoint expects " +
                    std::to_string(c.config.class_count));
  }
  return model;
}

int cmd_train(const Flags& f) {
  DataSplit data = load_split(f.data);
  RunConfig rc = run_config(f, &data.train);
  data.train.validate(rc.model.image_extent, rc.model.input_channels);
  if (data.test) data.test->validate(rc.model.image_extent, rc.model.input_channels);
  Model<float> model(rc.model);
  TrainOptions opt;
  opt.threads = thread_count(f);
  if (data.test) opt.test = &*data.test;
  if (f.verbose) {
    opt.on_iteration = [](const IterationRecord& r) {
      std::fprintf(stderr, "iter %zu epoch %zu loss %.5f acc %.3f\n", r.iter, r.epoch, r.loss_entropy + r.loss_l2,
                   r.acc);
    };
  }
  TrainRecord rec = train(model, rc.train, data.train, opt);
  fs::path out(f.out);
  save_checkpoint(out / "checkpoint.lnl", model);
  write_csv(out / "train_record.csv", train_record_table(rec));
  if (!rec.epochs.empty()) write_csv(out / "epochs.csv", epoch_table(rec));
  atomic_write(out / "config.txt", model_config_text(rc.model) + train_config_text(rc.train));
  std::printf("trained %zu iterations", rec.iterations.size());
  if (!rec.epochs.empty()) std::printf(", final test accuracy %.4f", rec.epochs.back().test_accuracy);
  std::printf("\n");
  return 0;
}

int cmd_eval(const Flags& f) {
  Dataset data = eval_set(f.data);
  Model<float> model = load_checked(f, data);
  EvalResult r = evaluate(model, data, thread_count(f));
  fs::path out(f.out);
  write_csv(out / "confusion.csv", confusion_table(r.confusion, data.class_names));
  atomic_write(out / "accuracy.txt", fmt_num(r.accuracy) + "\n");
  std::printf("accuracy %.4f (%zu/%zu)\n", r.accuracy, r.confusion.trace(), r.confusion.total());
  return 0;
}

int cmd_inspect(const Flags& f) {
  Dataset data = eval_set(f.data);
  Model<float> model = load_checked(f, data);
  const std::size_t n = std::min(f.limit, data.size());
  Dataset subset = data;
  subset.images.resize(n);
  subset.labels.resize(n);
  Inspection ins = inspect(model, subset, thread_count(f));
  const std::size_t m = model.config().m;
  fs::path out(f.out);
  CsvTable gates;
  gates.header = {"image", "label", "prediction"};
  for (std::size_t i = 0; i < m; ++i) gates.header.push_back("gate_" + std::to_string(i + 1));
  for (std::size_t i = 0; i < m; ++i) gates.header.push_back("wg_" + std::to_string(i + 1));
  for (std::size_t k = 0; k < n; ++k) {
    const auto& p = ins.predictions[k];
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.txt", k);
    atomic_write(out / "heatmaps" / name, format_heatmap(p.wg, model.geometry().grid));
    std::vector<std::string> row{std::to_string(k), std::to_string(subset.labels[k]), std::to_string(p.label)};
    for (double g : p.gates) row.push_back(fmt_num(g));
    for (double w : p.wg) row.push_back(fmt_num(w));
    gates.rows.push_back(std::move(row));
  }
  write_csv(out / "gates.csv", gates);
  atomic_write(out / "mean_heatmap.txt", format_heatmap(ins.mean_wg, model.geometry().grid));
  std::printf("inspected %zu images\n", n);
  return 0;
}

int cmd_occlude(const Flags& f) {
  Dataset data = eval_set(f.data);
  Model<float> model = load_checked(f, data);
  const std::size_t n = std::min(f.limit, data.size());
  const std::size_t m = model.config().m;
  CsvTable t;
  t.header = {"image", "occluded", "patch", "overlaps", "gate_before", "gate_after"};
  std::size_t drops = 0, trials = 0;
  for (std::size_t k = 0; k < n; ++k) {
    Tensor<float> img = to_tensor<float>(data.images[k]);
    for (std::size_t j = 0; j < m; ++j) {
      OcclusionResult r = occlusion_experiment(model, img, j);
      for (std::size_t i = 0; i < m; ++i) {
        t.rows.push_back({std::to_string(k), std::to_string(j), std::to_string(i),
                          i == j ? "self" : (r.overlaps[i] ? "yes" : "no"), fmt_num(r.gates_before[i]),
                          fmt_num(r.gates_after[i])});
      }
      drops += r.gates_after[j] < r.gates_before[j];
      ++trials;
    }
  }
  write_csv(fs::path(f.out) / "occlusion.csv", t);
  std::printf("occluded gate decreased in %zu of %zu trials\n", drops, trials);
  return 0;
}

int cmd_sweep(const Flags& f) {
  DataSplit data = load_split(f.data);
  if (!data.test) throw DataError("sweep needs a data root with train/ and test/");
  RunConfig rc = run_config(f, &data.train);
  SweepParam p = parse_sweep_param(f.param);
  std::vector<double> values = f.values.empty() ? default_sweep_values(p) : f.values;
  auto rows = sweep<float>(p, values, rc.model, rc.train, data.train, *data.test, thread_count(f));
  CsvTable t;
  t.header = {"parameter", "value", "status", "accuracy", "reason"};
  for (const auto& r : rows) {
    std::string reason = r.reason;
    for (char& c : reason)
      if (c == ',' || c == '"' || c == '\n') c = ';';
    t.rows.push_back({to_string(p), fmt_num(r.value), r.ok ? "ok" : "skipped", fmt_num(r.accuracy), reason});
    std::printf("%s = %g: %s\n", to_string(p).c_str(), r.value,
                r.ok ? ("accuracy " + std::to_string(r.accuracy)).c_str() : ("skipped: " + r.reason).c_str());
  }
  write_csv(fs::path(f.out) / "sweep.csv", t);
  return 0;
}

int cmd_gradcheck(const Flags& f) {
  const std::uint64_t seed = f.seed.value_or(1);
  if (f.profile && parse_profile(*f.profile) != Profile::kTiny) {
    throw ConfigError("gradcheck runs at the tiny profile only");
  }
  bool ok = true;
  for (const auto& e : gradient_suite(seed)) {
    std::printf("%-20s max_rel_error %.3e over %zu coords  %s\n", e.name.c_str(), e.result.max_rel_error,
                e.result.checked, e.passed ? "ok" : "FAIL");
    ok = ok && e.passed;
  }
  if (!ok) throw NumericalError("gradient check failed");
  return 0;
}

int cmd_synth(const Flags& f) {
  RunConfig rc = run_config(f);
  SynthOptions o;
  o.class_count = f.classes;
  o.samples_per_class = f.per_class;
  o.extent = rc.model.image_extent;
  o.channels = rc.model.input_channels;
  o.cell_grid = exact_sqrt(rc.model.m);
  o.seed = f.seed.value_or(1);
  SynthSplit s = synth_dataset(o);
  fs::path out(f.out);
  save_dataset(out / "train", s.train);
  save_dataset(out / "test", s.test);
  atomic_write(out / "lnlatten.cfg", "profile = " + to_string(rc.model.profile) + "\nclass_count = " +
                                         std::to_string(o.class_count) + "\nm = " + std::to_string(rc.model.m) +
                                         "\nhorizontal_flip = false\nrandom_crop = false\n");
  std::printf("wrote %zu training and %zu test images to %s\n", s.train.size(), s.test.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local/non-local joint attention networks: training and inspection"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", f.config, "key = value configuration file");
    c->add_option("--data", f.data, "dataset root (class subdirectories, optionally under train/ and test/)");
    c->add_option("--out", f.out, "output directory");
    c->add_option("--checkpoint", f.checkpoint, "checkpoint file (default OUT/checkpoint.lnl)");
    c->add_option("--seed", f.seed, "random seed");
    c->add_option("--variant", f.variant, "full, model_s, model_local or model_nonlocal");
    c->add_option("--alpha", f.alpha, "non-local mixing weight in [0, 1]");
    c->add_option("--patches", f.patches, "number of local patches M (a perfect square)");
    c->add_option("--overlap-pixels", f.overlap_pixels, "patch overlap in pixels");
    c->add_option("--profile", f.profile, "paper or tiny");
    c->add_option("--threads", f.threads, "worker threads (default: LNL_THREADS or 1)");
  };

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Flags&);
  };
  const Command commands[] = {
      {"train", "train a model; writes checkpoint and training record", cmd_train},
      {"eval", "evaluate a checkpoint; writes accuracy and confusion matrix", cmd_eval},
      {"inspect-weights", "write per-image weight heatmaps and gate values", cmd_inspect},
      {"occlude", "zero each patch in turn and record the gates", cmd_occlude},
      {"sweep", "train one model per parameter value", cmd_sweep},
      {"gradcheck", "finite-difference check of every operation and the tiny model", cmd_gradcheck},
      {"synth-data", "write a planted-glyph dataset", cmd_synth},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    common(sub);
    subs.emplace_back(sub, &c);
    const std::string name = c.name;
    if (name == "sweep") {
      sub->add_option("--param", f.param, "alpha, m or overlap_pixels");
      sub->add_option("--values", f.values, "values to sweep (default: the standard grid)")->delimiter(',');
    }
    if (name == "occlude" || name == "inspect-weights") sub->add_option("--limit", f.limit, "images to process");
    if (name == "synth-data") {
      sub->add_option("--classes", f.classes, "number of classes");
      sub->add_option("--per-class", f.per_class, "images per class");
    }
    if (name == "train") sub->add_flag("--verbose", f.verbose, "print every iteration");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    for (auto& [sub, cmd] : subs)
      if (sub->parsed()) return cmd->run(f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
