#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "chaosop/csv.hpp"

using namespace chaosop;

TEST(Csv, NumbersRoundTripExactly) {
  const auto dir = std::filesystem::temp_directory_path() / "chaosop_csv_test";
  std::filesystem::remove_all(dir);
  CsvTable t(concat({"a"}, numbered("xi", 2)));
  Eigen::RowVector3d r1(0.1, -1.0 / 3.0, 1e-300), r2(std::numeric_limits<double>::max(), 0.0, -2.5);
  t.add_row(r1);
  t.add_row(r2);
  t.write(dir / "t.csv");
  const auto [header, m] = read_numeric_csv(dir / "t.csv");
  EXPECT_EQ(header, (std::vector<std::string>{"a", "xi0", "xi1"}));
  ASSERT_EQ(m.rows(), 2);
  EXPECT_EQ(m.row(0), r1);
  EXPECT_EQ(m.row(1), r2);
  std::filesystem::remove_all(dir);
}

TEST(Csv, RejectsRaggedRows) {
  CsvTable t({"a", "b"});
  EXPECT_THROW(t.add_row(std::vector<std::string>{"1"}), ShapeError);
  EXPECT_THROW(CsvTable({}), ParameterError);
}

TEST(Csv, ReaderReportsTheLine) {
  const auto dir = std::filesystem::temp_directory_path() / "chaosop_csv_bad";
  atomic_write(dir / "bad.csv", "a,b\n1,2\n3,oops\n");
  try {
    read_numeric_csv(dir / "bad.csv");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  std::filesystem::remove_all(dir);
}
