// Copyright (c) 2026 The diffaug Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dataset manifests: CSV with header path,fold,class_id,class_name.
// UrbanSound8K's metadata (slice_file_name,fsID,start,end,salience,fold,
// classID,class) converts with from_urbansound8k(), giving paths of the form
// fold<N>/<slice_file_name> relative to the audio root.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "diffaug/error.hpp"

namespace diffaug::io {

inline constexpr int kMaxFolds = 10;

struct ManifestRow {
  std::string path;
  int fold = 1;
  int class_id = 0;
  std::string class_name;
  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

namespace detail {

/// Splits one CSV record; double quotes may wrap fields and "" escapes a quote.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else {
      out.back() += ch;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quote");
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline int parse_int(const std::string& s, const char* what) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw std::invalid_argument(std::string(what) + " '" + s + "' is not an integer");
  return v;
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    lines.push_back(l);
  }
  return lines;
}

}  // namespace detail

/// Parses manifest text. Errors carry the 1-based line number. Manifests of
/// generated samples use fold 0 and are read with min_fold = 0.
inline std::vector<ManifestRow> parse_manifest(const std::string& text, int max_fold = kMaxFolds, int min_fold = 1) {
  const auto lines = detail::lines_of(text);
  if (lines.empty() || lines[0] != "path,fold,class_id,class_name") {
    throw ConfigError("manifest: header must be 'path,fold,class_id,class_name'");
  }
  std::vector<ManifestRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = "manifest line " + std::to_string(i + 1) + ": ";
    try {
      const auto f = detail::split_csv(lines[i]);
      if (f.size() != 4) throw std::invalid_argument("expected 4 fields, got " + std::to_string(f.size()));
      ManifestRow r{f[0], detail::parse_int(f[1], "fold"), detail::parse_int(f[2], "class_id"), f[3]};
      if (r.path.empty()) throw std::invalid_argument("empty path");
      if (r.fold < min_fold || r.fold > max_fold) {
        throw std::invalid_argument("fold " + std::to_string(r.fold) + " outside [" + std::to_string(min_fold) + ", " +
                                    std::to_string(max_fold) + "]");
      }
      if (r.class_id < 0) throw std::invalid_argument("negative class_id");
      rows.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + e.what());
    }
  }
  return rows;
}

inline std::string format_manifest(const std::vector<ManifestRow>& rows) {
  std::string out = "path,fold,class_id,class_name\n";
  for (const auto& r : rows) {
    out += detail::csv_field(r.path) + ',' + std::to_string(r.fold) + ',' + std::to_string(r.class_id) + ',' +
           detail::csv_field(r.class_name) + '\n';
  }
  return out;
}

inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& path, int max_fold = kMaxFolds,
                                              int min_fold = 1) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest(ss.str(), max_fold, min_fold);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << format_manifest(rows);
}

/// Relative manifest paths are taken relative to the manifest's directory.
inline std::filesystem::path resolve_path(const std::filesystem::path& manifest, const ManifestRow& row) {
  const std::filesystem::path p(row.path);
  return p.is_absolute() ? p : manifest.parent_path() / p;
}

inline std::vector<ManifestRow> from_urbansound8k(const std::string& metadata_csv) {
  const auto lines = detail::lines_of(metadata_csv);
  if (lines.empty()) throw ConfigError("UrbanSound8K metadata is empty");
  const auto header = detail::split_csv(lines[0]);
  auto col = [&](const char* name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError(std::string("UrbanSound8K metadata lacks column ") + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_file = col("slice_file_name"), c_fold = col("fold"), c_id = col("classID"), c_name = col("class");
  std::vector<ManifestRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = detail::split_csv(lines[i]);
    if (f.size() != header.size()) throw ConfigError("UrbanSound8K metadata line " + std::to_string(i + 1) + ": wrong field count");
    try {
      const int fold = detail::parse_int(f[c_fold], "fold");
      rows.push_back({"fold" + std::to_string(fold) + "/" + f[c_file], fold, detail::parse_int(f[c_id], "classID"), f[c_name]});
    } catch (const std::invalid_argument& e) {
      throw ConfigError("UrbanSound8K metadata line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return rows;
}

template <class Row>
struct FoldSplit {
  int fold = 0;
  std::vector<Row> train;
  std::vector<Row> test;
};

/// One split per non-empty fold: fold f is the test set, the rest train.
/// Empty folds are reported through `warn` and skipped.
template <class Row = ManifestRow>
std::vector<FoldSplit<Row>> kfold_splits(const std::vector<Row>& rows, int folds,
                                         const std::function<void(const std::string&)>& warn = {}) {
  if (folds < 1) throw std::invalid_argument("kfold_splits: folds must be >= 1");
  for (const auto& r : rows) {
    if (r.fold < 1 || r.fold > folds) {
      throw std::invalid_argument("kfold_splits: fold " + std::to_string(r.fold) + " outside [1, " +
                                  std::to_string(folds) + "]");
    }
  }
  std::vector<FoldSplit<Row>> out;
  for (int f = 1; f <= folds; ++f) {
    FoldSplit<Row> s{f, {}, {}};
    for (const auto& r : rows) (r.fold == f ? s.test : s.train).push_back(r);
    if (s.test.empty()) {
      if (warn) warn("fold " + std::to_string(f) + " is empty; split skipped");
      continue;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace diffaug::io
