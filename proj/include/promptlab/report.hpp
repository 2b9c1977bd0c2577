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

// CSV emission. Every table starts with a "# artifact: <name>" line followed
// by a header row; numbers use a fixed format so identical runs produce
// identical bytes.

#ifndef PROMPTLAB_REPORT_HPP_
#define PROMPTLAB_REPORT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "promptlab/analysis.hpp"

namespace promptlab {

class CsvTable {
 public:
  CsvTable(std::string artifact, std::vector<std::string> columns);

  /// Throws ContractError when the row width differs from the header.
  void add_row(std::vector<std::string> cells);

  const std::string& artifact() const { return artifact_; }
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string artifact_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// Fixed six-decimal rendering.
std::string fmt(double v);
std::string fmt(std::uint64_t v);
std::string fmt_int(std::size_t v);

/// Appends a WER table with columns arm, seed, split, wer, edits, ref_tokens.
void append_wer_rows(CsvTable& csv, const WerTable& table, const std::string& seed,
                     const std::string& prompts = "");

/// Columns: arm, seed, split, wer, edits, ref_tokens (and prompts when set).
CsvTable wer_csv(const std::string& artifact, bool with_prompts = false);

/// "1 2 3" (1-based) rendering of 0-based indices.
std::string format_ids(const std::vector<std::size_t>& rows);

/// Drops '#' comment lines, keeping the header and data rows.
std::string csv_body(const std::string& text);

}  // namespace promptlab

#endif  // PROMPTLAB_REPORT_HPP_
