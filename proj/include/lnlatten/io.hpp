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

// Files: atomic writes, portable pixmaps, dataset trees, CSV tables.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lnlatten/dataset.hpp"

namespace lnl {

namespace fs = std::filesystem;

/// Writes to a sibling temporary file, then renames it over `path`.
inline void atomic_write(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot rename into '" + path.string() + "': " + ec.message());
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------------ PNM

/// Binary P5 (gray) or P6 (RGB), maxval 255.
inline std::string encode_pnm(const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw DataError("pnm supports 1 or 3 channels");
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

/// Decodes P2/P3/P5/P6 with maxval up to 255.
inline Image8 decode_pnm(const std::string& bytes, const std::string& what = "image") {
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) -> DataError { return DataError(what + ": " + msg); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw fail("malformed header");
    return std::stoul(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes[0] != 'P') throw fail("not a portable pixmap");
  const char kind = bytes[1];
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
    throw fail(std::string("unsupported pixmap type P") + kind);
  }
  pos = 2;
  Image8 img;
  img.width = number();
  img.height = number();
  const std::size_t maxval = number();
  if (img.width == 0 || img.height == 0) throw fail("zero extent");
  if (maxval == 0 || maxval > 255) throw fail("maxval must be in 1..255");
  img.channels = (kind == '3' || kind == '6') ? 3 : 1;
  const std::size_t n = img.width * img.height * img.channels;
  img.pixels.resize(n);
  auto scale = [&](std::size_t v) {
    if (v > maxval) throw fail("sample exceeds maxval");
    return static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  };
  if (kind == '5' || kind == '6') {
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos + n) throw fail("truncated pixel data");
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = scale(static_cast<unsigned char>(bytes[pos + i]));
  } else {
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = scale(number());
  }
  return img;
}

inline Image8 read_pnm(const fs::path& path) { return decode_pnm(read_file(path), path.string()); }

inline void write_pnm(const fs::path& path, const Image8& img) { atomic_write(path, encode_pnm(img)); }

// ------------------------------------------------------------- datasets

inline bool is_pnm_name(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

/// root/<class>/<image>.pgm|ppm, classes and images in name order. An
/// optional root/planted.txt carries ground-truth crucial cells.
inline Dataset load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root '" + root.string() + "' is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DataError("dataset root '" + root.string() + "' has no class directories");
  Dataset d;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[c]))
      if (e.is_regular_file() && is_pnm_name(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("class directory '" + class_dirs[c].string() + "' has no images");
    d.class_names.push_back(class_dirs[c].filename().string());
    for (const auto& f : files) {
      Image8 img = read_pnm(f);
      if (img.width != img.height) throw DataError(f.string() + ": image is not square");
      if (d.images.empty()) {
        d.extent = img.width;
        d.channels = img.channels;
      } else if (img.width != d.extent || img.channels != d.channels) {
        throw DataError(f.string() + ": geometry differs from the first image");
      }
      d.images.push_back(std::move(img));
      d.labels.push_back(c);
    }
  }
  fs::path planted = root / "planted.txt";
  if (fs::exists(planted)) {
    std::istringstream in(read_file(planted));
    std::string key;
    while (in >> key) {
      if (key == "grid") {
        in >> d.cell_grid;
      } else if (key == "cells") {
        std::size_t v;
        while (in >> v) d.planted_cells.push_back(v);
      } else {
        throw DataError(planted.string() + ": unknown entry '" + key + "'");
      }
    }
  }
  return d;
}

inline void save_dataset(const fs::path& root, const Dataset& d) {
  std::vector<std::size_t> seen(d.class_count(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t c = d.labels.at(i);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.%s", seen[c]++, d.channels == 1 ? "pgm" : "ppm");
    write_pnm(root / d.class_names.at(c) / name, d.images[i]);
  }
  if (!d.planted_cells.empty()) {
    std::string txt = "grid " + std::to_string(d.cell_grid) + "\ncells";
    for (auto c : d.planted_cells) txt += " " + std::to_string(c);
    atomic_write(root / "planted.txt", txt + "\n");
  }
}

// ------------------------------------------------------------------ CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("csv has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }

  friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

/// Fields are numbers or plain identifiers; commas and quotes are rejected.
inline std::string format_csv(const CsvTable& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\"\n") != std::string::npos) {
        throw DataError("csv field '" + cells[i] + "' needs quoting");
      }
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size()) throw DataError("csv row width differs from header");
    line(r);
  }
  return out;
}

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size()) {
        throw DataError("csv line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                        " fields, header has " + std::to_string(t.header.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw DataError("csv is empty");
  return t;
}

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_num(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw DataError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw DataError("bad number '" + s + "'");
  }
}

inline void write_csv(const fs::path& path, const CsvTable& t) { atomic_write(path, format_csv(t)); }
inline CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path)); }

}  // namespace lnl
