// Copyright 2026 The promptlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "promptlab/report.hpp"

#include <cstdio>
#include <sstream>

#include "promptlab/checkpoint.hpp"

namespace promptlab {

CsvTable::CsvTable(std::string artifact, std::vector<std::string> columns)
    : artifact_(std::move(artifact)), columns_(std::move(columns)) {
  if (columns_.empty()) throw ContractError("csv: no columns");
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size()) {
    throw ContractError("csv " + artifact_ + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(columns_.size()));
  }
  for (const auto& c : cells) {
    if (c.find_first_of(",\n\"") != std::string::npos) {
      throw ContractError("csv " + artifact_ + ": cell '" + c + "' needs quoting");
    }
  }
  rows_.push_back(std::move(cells));
}

std::string CsvTable::str() const {
  std::string out = "# artifact: " + artifact_ + "\n";
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += "\n";
  };
  line(columns_);
  for (const auto& r : rows_) line(r);
  return out;
}

void CsvTable::write(const std::filesystem::path& path) const { write_file_atomic(path, str()); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt_int(std::size_t v) { return std::to_string(v); }

CsvTable wer_csv(const std::string& artifact, bool with_prompts) {
  std::vector<std::string> cols = {"arm", "seed", "split", "wer", "edits", "ref_tokens"};
  if (with_prompts) cols.insert(cols.begin() + 1, "prompts");
  return CsvTable(artifact, cols);
}

void append_wer_rows(CsvTable& csv, const WerTable& table, const std::string& seed,
                     const std::string& prompts) {
  for (const auto& r : table) {
    std::vector<std::string> cells = {r.arm, seed, r.split, fmt(r.wer), fmt_int(r.edits), fmt_int(r.ref_tokens)};
    if (!prompts.empty()) cells.insert(cells.begin() + 1, prompts);
    csv.add_row(std::move(cells));
  }
}

std::string format_ids(const std::vector<std::size_t>& rows) {
  std::string s;
  for (std::size_t i = 0; i < rows.size(); ++i) s += (i ? " " : "") + std::to_string(rows[i] + 1);
  return s;
}

std::string csv_body(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    out += line + "\n";
  }
  return out;
}

}  // namespace promptlab
