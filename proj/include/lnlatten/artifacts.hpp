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

// CSV and text forms of training records, confusion matrices and heatmaps.

#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "lnlatten/io.hpp"
#include "lnlatten/train.hpp"

namespace lnl {

/// iter, loss_entropy, loss_l2, acc, wg_1..wg_M
inline CsvTable train_record_table(const TrainRecord& r) {
  CsvTable t;
  t.header = {"iter", "loss_entropy", "loss_l2", "acc"};
  for (std::size_t i = 0; i < r.m; ++i) t.header.push_back("wg_" + std::to_string(i + 1));
  for (const auto& it : r.iterations) {
    std::vector<std::string> row{std::to_string(it.iter), fmt_num(it.loss_entropy),
                                 fmt_num(it.loss_l2), fmt_num(it.acc)};
    for (double w : it.wg) row.push_back(fmt_num(w));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Inverse of train_record_table for the columns it carries.
inline TrainRecord train_record_from_table(const CsvTable& t) {
  TrainRecord r;
  const std::size_t ci = t.column("iter"), ce = t.column("loss_entropy"),
                    cl = t.column("loss_l2"), ca = t.column("acc");
  std::vector<std::size_t> wcols;
  for (std::size_t i = 1;; ++i) {
    auto it = std::find(t.header.begin(), t.header.end(), "wg_" + std::to_string(i));
    if (it == t.header.end()) break;
    wcols.push_back(static_cast<std::size_t>(it - t.header.begin()));
  }
  r.m = wcols.size();
  for (const auto& row : t.rows) {
    IterationRecord ir;
    ir.iter = static_cast<std::size_t>(parse_num(row[ci]));
    ir.loss_entropy = parse_num(row[ce]);
    ir.loss_l2 = parse_num(row[cl]);
    ir.acc = parse_num(row[ca]);
    for (auto c : wcols) ir.wg.push_back(parse_num(row[c]));
    r.iterations.push_back(std::move(ir));
  }
  return r;
}

inline CsvTable epoch_table(const TrainRecord& r) {
  CsvTable t;
  t.header = {"epoch", "learning_rate", "test_accuracy"};
  for (const auto& e : r.epochs)
    t.rows.push_back({std::to_string(e.epoch), fmt_num(e.learning_rate), fmt_num(e.test_accuracy)});
  return t;
}

/// First column is the true class name, then one count column per
/// predicted class.
inline CsvTable confusion_table(const Confusion& c, const std::vector<std::string>& names) {
  if (names.size() != c.classes) throw ContractError("confusion: class name count mismatch");
  CsvTable t;
  t.header.push_back("truth");
  for (const auto& n : names) t.header.push_back(n);
  for (std::size_t i = 0; i < c.classes; ++i) {
    std::vector<std::string> row{names[i]};
    for (std::size_t j = 0; j < c.classes; ++j) row.push_back(std::to_string(c.at(i, j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Confusion confusion_from_table(const CsvTable& t) {
  if (t.header.empty() || t.header[0] != "truth") throw DataError("not a confusion table");
  Confusion c(t.header.size() - 1);
  if (t.rows.size() != c.classes) throw DataError("confusion table is not square");
  for (std::size_t i = 0; i < c.classes; ++i)
    for (std::size_t j = 0; j < c.classes; ++j)
      c.at(i, j) = static_cast<std::size_t>(parse_num(t.rows[i][j + 1]));
  return c;
}

/// n lines of n space-separated weights, row-major over the patch grid.
inline std::string format_heatmap(const std::vector<double>& w, std::size_t n) {
  if (w.size() != n * n) throw ContractError("heatmap needs n*n weights");
  std::string out;
  char buf[32];
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      std::snprintf(buf, sizeof buf, "%.9f", w[r * n + c]);
      if (c) out += ' ';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

inline std::vector<std::vector<double>> parse_heatmap(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) row.push_back(parse_num(tok));
    rows.push_back(std::move(row));
  }
  for (const auto& r : rows)
    if (r.size() != rows.size()) throw DataError("heatmap is not square");
  return rows;
}

}  // namespace lnl
