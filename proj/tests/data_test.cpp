#include "flake/data.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "flake/gram.hpp"
#include "flake/masking.hpp"
#include "flake/svm.hpp"

namespace flake {
namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() / ("flake_data_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write_file(const std::string& name, const std::string& text) {
    std::ofstream out(path(name));
    out << text;
  }

  std::filesystem::path dir_;
};

using CsvTest = TempDir;

TEST(GenSynthetic, BalancesClassesRoundRobin) {
  const Dataset data = gen_synthetic(1000, 20, 4, 42);
  ASSERT_EQ(data.features.rows(), 1000u);
  ASSERT_EQ(data.features.cols(), 20u);
  ASSERT_EQ(data.labels.size(), 1000u);

  std::map<int, int> counts;
  for (const int y : data.labels) counts[y]++;
  ASSERT_EQ(counts.size(), 4u);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(counts[c], 250) << "class " << c;
}

TEST(GenSynthetic, RemainderSamplesGoToLowestClasses) {
  const Dataset data = gen_synthetic(10, 3, 4, 7);
  std::map<int, int> counts;
  for (const int y : data.labels) counts[y]++;
  EXPECT_EQ(counts[0], 3);
  EXPECT_EQ(counts[1], 3);
  EXPECT_EQ(counts[2], 2);
  EXPECT_EQ(counts[3], 2);
}

TEST(GenSynthetic, SameSeedIsBitIdentical) {
  const Dataset a = gen_synthetic(200, 7, 3, 99);
  const Dataset b = gen_synthetic(200, 7, 3, 99);
  ASSERT_EQ(a.labels, b.labels);
  for (std::size_t i = 0; i < a.features.rows(); ++i) {
    for (std::size_t j = 0; j < a.features.cols(); ++j) {
      ASSERT_EQ(a.features(i, j), b.features(i, j)) << i << "," << j;
    }
  }
}

TEST(GenSynthetic, DifferentSeedsDiffer) {
  const Dataset a = gen_synthetic(50, 5, 2, 1);
  const Dataset b = gen_synthetic(50, 5, 2, 2);
  EXPECT_GT(a.features.max_abs_diff(b.features), 0.1);
}

TEST(GenSynthetic, ProducesNoAllZeroRows) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset data = gen_synthetic(60, 4, 3, seed);
    EXPECT_NO_THROW(validate_rows(data.features)) << "seed " << seed;
  }
}

TEST(GenSynthetic, RejectsDegenerateShapes) {
  EXPECT_THROW(gen_synthetic(0, 5, 2, 1), ValidationError);
  EXPECT_THROW(gen_synthetic(10, 0, 2, 1), ValidationError);
  EXPECT_THROW(gen_synthetic(10, 5, 1, 1), ValidationError);
  EXPECT_THROW(gen_synthetic(3, 5, 4, 1), ValidationError);  // fewer samples than classes
}

// Blobs separated by 4 standard deviations must be nearly perfectly
// classifiable; this pins the generator to "blobs with controllable
// separation" rather than noise.
TEST(GenSynthetic, WideSeparationYieldsHighAuc) {
  const Dataset data = gen_synthetic(120, 10, 2, 5, /*separation=*/4.0);
  const Matrix gram = data.features.times_transposed(data.features);
  CvOptions opts;
  opts.folds = 3;
  const CvReport report = cross_validate_grid(gram, data.labels, {1.0}, {1}, opts);
  EXPECT_GE(report.mean_auc, 0.99);
}

TEST_F(CsvTest, SaveLoadRoundTripIsLossless) {
  const Dataset data = gen_synthetic(37, 6, 3, 11);
  save_csv(data, path("round.csv"));
  const Dataset back = load_csv(path("round.csv"));
  ASSERT_EQ(back.labels, data.labels);
  ASSERT_EQ(back.features.rows(), data.features.rows());
  for (std::size_t i = 0; i < data.features.rows(); ++i) {
    for (std::size_t j = 0; j < data.features.cols(); ++j) {
      ASSERT_EQ(back.features(i, j), data.features(i, j)) << i << "," << j;
    }
  }
}

TEST_F(CsvTest, LoadsHandWrittenFileWithLabelColumnAnywhere) {
  write_file("hand.csv", "a,label,b\n1.5,0,2.5\n-3,1,0.25\n0.125,0,8\n");
  const Dataset data = load_csv(path("hand.csv"));
  ASSERT_EQ(data.features.rows(), 3u);
  ASSERT_EQ(data.features.cols(), 2u);
  EXPECT_EQ(data.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(data.features(1, 0), -3.0);
  EXPECT_EQ(data.features(2, 1), 8.0);
}

TEST_F(CsvTest, SkipsBlankLinesAndCarriageReturns) {
  write_file("crlf.csv", "f0,label\r\n1,0\r\n\r\n2,1\r\n");
  const Dataset data = load_csv(path("crlf.csv"));
  ASSERT_EQ(data.features.rows(), 2u);
  EXPECT_EQ(data.labels, (std::vector<int>{0, 1}));
}

TEST_F(CsvTest, RejectsMalformedInputs) {
  EXPECT_THROW(load_csv(path("missing.csv")), IoError);

  write_file("empty.csv", "");
  EXPECT_THROW(load_csv(path("empty.csv")), ValidationError);

  write_file("nolabel.csv", "a,b\n1,2\n");
  EXPECT_THROW(load_csv(path("nolabel.csv")), ValidationError);

  write_file("ragged.csv", "a,label\n1,0\n1,2,3\n");
  EXPECT_THROW(load_csv(path("ragged.csv")), ValidationError);

  write_file("text.csv", "a,label\noops,0\n");
  EXPECT_THROW(load_csv(path("text.csv")), ValidationError);

  write_file("fraclabel.csv", "a,label\n1,0.5\n");
  EXPECT_THROW(load_csv(path("fraclabel.csv")), ValidationError);
}

// A zero feature row is valid CSV; the masking layer is where it must fail.
TEST_F(CsvTest, ZeroRowLoadsButFailsMaskingValidation) {
  write_file("zero.csv", "f0,f1,label\n0,0,0\n1,2,1\n");
  const Dataset data = load_csv(path("zero.csv"));
  ASSERT_EQ(data.features.rows(), 2u);
  EXPECT_THROW(validate_rows(data.features), ValidationError);
}

TEST_F(CsvTest, MatrixCsvRoundTripsLosslessly) {
  Matrix m(3, 2);
  m(0, 0) = 1.0 / 3.0;
  m(0, 1) = -0.0;
  m(1, 0) = 1e-300;
  m(1, 1) = 12345.6789;
  m(2, 0) = -9.87e250;
  m(2, 1) = 5e-324;
  save_matrix_csv(m, path("m.csv"));
  const Matrix back = load_matrix_csv(path("m.csv"));
  ASSERT_EQ(back.rows(), 3u);
  ASSERT_EQ(back.cols(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) ASSERT_EQ(back(i, j), m(i, j));
  }
}

TEST_F(CsvTest, MatrixCsvRejectsRaggedRows) {
  write_file("ragged_m.csv", "1,2\n3\n");
  EXPECT_THROW(load_matrix_csv(path("ragged_m.csv")), ValidationError);
}

TEST_F(CsvTest, MatrixBinaryRoundTripsBitExactly) {
  const Dataset data = gen_synthetic(25, 8, 2, 3);
  save_matrix_binary(data.features, path("m.bin"));
  const Matrix back = load_matrix_binary(path("m.bin"));
  ASSERT_EQ(back.rows(), data.features.rows());
  ASSERT_EQ(back.cols(), data.features.cols());
  EXPECT_EQ(back.max_abs_diff(data.features), 0.0);
}

TEST_F(CsvTest, MatrixBinaryRejectsCorruptFile) {
  write_file("corrupt.bin", "not a matrix");
  EXPECT_THROW(load_matrix_binary(path("corrupt.bin")), ProtocolError);
}

TEST_F(CsvTest, SaveCsvRejectsMismatchedLabels) {
  Dataset data;
  data.features = Matrix(2, 2);
  data.labels = {0};
  EXPECT_THROW(save_csv(data, path("bad.csv")), ValidationError);
}

}  // namespace
}  // namespace flake
