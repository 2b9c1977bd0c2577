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

#include <gtest/gtest.h>

namespace promptlab {
namespace {

TEST(Csv, HeaderCommentThenColumns) {
  CsvTable t("table1_analog", {"a", "b"});
  t.add_row({"1", "x"});
  EXPECT_EQ(t.str(), "# artifact: table1_analog\na,b\n1,x\n");
  EXPECT_EQ(csv_body(t.str()), "a,b\n1,x\n");
  EXPECT_EQ(t.rows(), 1u);
}

TEST(Csv, RejectsBadRows) {
  CsvTable t("x", {"a", "b"});
  EXPECT_THROW(t.add_row({"1"}), ContractError);
  EXPECT_THROW(t.add_row({"1,2", "3"}), ContractError);
  EXPECT_THROW(t.add_row({"\"q\"", "3"}), ContractError);
  EXPECT_THROW(CsvTable("x", {}), ContractError);
}

TEST(Csv, WerRows) {
  auto t = wer_csv("t", true);
  append_wer_rows(t, {{"tuned", "test_noisy", 0.125, 1, 8, 0.5}}, "3", "20");
  EXPECT_EQ(csv_body(t.str()), "arm,prompts,seed,split,wer,edits,ref_tokens\ntuned,20,3,test_noisy,0.125000,1,8\n");
}

TEST(Format, FixedDecimalsAndIds) {
  EXPECT_EQ(fmt(1.0 / 3.0), "0.333333");
  EXPECT_EQ(fmt(std::uint64_t{42}), "42");
  EXPECT_EQ(format_ids({0, 4, 2}), "1 5 3");
  EXPECT_EQ(format_ids({}), "");
}

}  // namespace
}  // namespace promptlab
