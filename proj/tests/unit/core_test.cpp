#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fmc/core.hpp"

namespace fmc {
namespace {

TEST(AggregateMode, TableCodes) {
  EXPECT_EQ(aggregate_mode("04"), ModeLabel::ForHireTruck);
  EXPECT_EQ(aggregate_mode("05"), ModeLabel::PrivateTruck);
  EXPECT_EQ(aggregate_mode("14"), ModeLabel::Parcel);
  EXPECT_EQ(aggregate_mode("11"), ModeLabel::Air);
  for (const char* code : {"06", "07", "08", "09", "10", "101", "12", "15", "16", "17"}) {
    EXPECT_EQ(aggregate_mode(code), ModeLabel::Other) << code;
  }
}

TEST(AggregateMode, UnmatchedCodes) {
  for (const char* code : {"00", "02", "03", "13", "18", "", "4"}) EXPECT_FALSE(aggregate_mode(code)) << code;
}

TEST(AggregateMode, TableIsTotalOverItsCodes) {
  const auto& table = mode_code_table();
  EXPECT_EQ(table.size(), 14u);
  std::set<ModeLabel> images;
  for (const auto& [code, mode] : table) {
    EXPECT_EQ(aggregate_mode(code), mode);
    images.insert(mode);
  }
  EXPECT_EQ(images.size(), 5u);
}

TEST(ModeLabel, IndexRoundTrip) {
  for (auto m : kAllModes) {
    EXPECT_EQ(mode_from_index(mode_index(m)), m);
    EXPECT_EQ(mode_from_ordinal(mode_ordinal(m)), m);
  }
  EXPECT_THROW(mode_from_index(5), Error);
}

TEST(Argmax, TiesGoLow) {
  ProbVector p;
  p << 0.5, 0.5, 0, 0, 0;
  EXPECT_EQ(argmax(p), 0);
  p << 0.1, 0.2, 0.3, 0.3, 0.1;
  EXPECT_EQ(argmax(p), 2);
}

TEST(SctgGroups, DefaultMapIsTotal) {
  const auto map = SctgGroupMap::default_map();
  EXPECT_EQ(map.num_groups(), 9);
  EXPECT_EQ(map.table().size(), 43u);
  EXPECT_EQ(sctg_to_group("01", map), 1);
  EXPECT_EQ(sctg_to_group("01", map), sctg_to_group("01", map));
  EXPECT_EQ(sctg_to_group("05", map), 1);
  EXPECT_EQ(sctg_to_group("06", map), 2);
  EXPECT_EQ(sctg_to_group("43", map), 9);
  EXPECT_THROW(sctg_to_group("99", map), UnknownCategory);
}

TEST(SctgGroups, FromCsv) {
  std::istringstream in("sctg,group\n01,1\n02,2\n03,2\n");
  const auto map = SctgGroupMap::from_csv(in);
  EXPECT_EQ(map.group_of("03"), 2);
  EXPECT_EQ(map.num_groups(), 2);
  EXPECT_THROW(map.group_of("04"), UnknownCategory);
}

TEST(SctgGroups, GapInGroupsRejected) {
  std::istringstream in("sctg,group\n01,1\n02,3\n");
  EXPECT_THROW(SctgGroupMap::from_csv(in), Error);
}

TEST(AreaLookup, Classify) {
  std::istringstream in("area,type\n06-348,C\n06-99999,R\n12-422,M\n");
  const auto lookup = AreaTypeLookup::from_csv(in);
  EXPECT_EQ(classify_area("06-348", lookup), AreaType::C);
  EXPECT_EQ(classify_area("06-99999", lookup), AreaType::R);
  EXPECT_EQ(classify_area("12-422", lookup), AreaType::M);
  EXPECT_THROW(classify_area("01-000", lookup), UnknownArea);
}

TEST(AreaLookup, CsvRoundTrip) {
  std::istringstream in("area,type\nA,C\nB,R\n");
  const auto lookup = AreaTypeLookup::from_csv(in);
  std::ostringstream out;
  lookup.write_csv(out);
  std::istringstream again(out.str());
  EXPECT_EQ(AreaTypeLookup::from_csv(again).table(), lookup.table());
}

}  // namespace
}  // namespace fmc
