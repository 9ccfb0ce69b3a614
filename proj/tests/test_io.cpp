#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "towerlab/io.hpp"

using namespace towerlab;

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.0, 1.0, -0.5, 0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -std::log(7.0)}) {
    const auto s = format_double(v);
    const auto back = parse_double(s);
    ASSERT_TRUE(back.has_value()) << s;
    EXPECT_EQ(*back, v) << s;
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(-2.0), "-2");
}

TEST(Io, ParseDoubleRejectsGarbage) {
  EXPECT_FALSE(parse_double("").has_value());
  EXPECT_FALSE(parse_double("x").has_value());
  EXPECT_FALSE(parse_double("1.5abc").has_value());
  EXPECT_EQ(*parse_double("+2.5"), 2.5);
  EXPECT_EQ(*parse_double("-1e3"), -1000.0);
}

TEST(Io, ParseIntChecksWholeToken) {
  EXPECT_EQ(*parse_int<int>("42"), 42);
  EXPECT_EQ(*parse_int<int>("+7"), 7);
  EXPECT_FALSE(parse_int<int>("4.2").has_value());
  EXPECT_FALSE(parse_int<unsigned>("-1").has_value());
}

TEST(Io, TrimAndSplit) {
  EXPECT_EQ(trim("  a b \t\r\n"), "a b");
  EXPECT_EQ(trim("   "), "");
  const auto parts = split("a,,b", ',');
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[1], "");
  const auto ws = split_ws("  one\ttwo   three ");
  ASSERT_EQ(ws.size(), 3u);
  EXPECT_EQ(ws[2], "three");
}

TEST(Io, CsvRowsChecksHeader) {
  const auto rows = csv_rows("a,b\n1,2\n\n3,4\n", "a,b");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "3");
  EXPECT_THROW(csv_rows("x,y\n1,2\n", "a,b"), std::runtime_error);
  EXPECT_THROW(csv_rows("", "a,b"), std::runtime_error);
}

TEST(Io, FileRoundTrip) {
  towerlab::testing::TempDir dir("io");
  const auto p = dir.path() / "f.txt";
  write_file(p, "hello\nworld");
  EXPECT_EQ(read_file(p), "hello\nworld");
  EXPECT_THROW(read_file(dir.path() / "missing.txt"), std::runtime_error);
  write_file(dir.path() / "a" / "b" / "g.txt", "nested");
  EXPECT_EQ(read_file(dir.path() / "a" / "b" / "g.txt"), "nested");
  EXPECT_THROW(write_file(dir.path(), "x"), std::runtime_error);  // a directory is not writable as a file
}
