#include "flake/report.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace flake {
namespace {

class ReportTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("flake_report_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::size_t line_count(const std::string& file) {
    std::ifstream in(file);
    std::size_t lines = 0;
    std::string line;
    while (std::getline(in, line)) ++lines;
    return lines;
  }

  std::filesystem::path dir_;
};

std::vector<CvReport> sample_cv_reports() {
  CvReport a;
  a.best_c = 0.0625;
  a.best_p = 3;
  a.fold_aucs = {0.91, 0.93, 0.9500000000000001, 1.0 / 3.0, 0.89};
  a.mean_auc = 0.8186666666666667;
  a.std_auc = 0.2345;
  CvReport b;
  b.best_c = 1024.0;
  b.best_p = 1;
  b.fold_aucs = {1.0, 1.0};
  b.mean_auc = 1.0;
  b.std_auc = 0.0;
  return {a, b};
}

std::vector<TimingReport> sample_timing_reports() {
  TimingReport a;
  a.label = "n=100";
  a.repeats = 3;
  a.stages = {StageSamples{"masking", {0.001, 0.0011, 0.0009}},
              StageSamples{"gram", {0.01, 0.011, 0.0105}},
              StageSamples{"training", {0.5, 0.52, 0.49}}};
  TimingReport b;
  b.label = "n=100";  // same label on purpose: records must stay distinct
  b.repeats = 2;
  b.stages = {StageSamples{"masking", {1.5e-6, 2.5e-6}}};
  return {a, b};
}

TEST(StageSamplesTest, MeanAndPopulationStddev) {
  const StageSamples s{"x", {1.0, 2.0, 3.0, 4.0}};
  EXPECT_DOUBLE_EQ(s.mean(), 2.5);
  EXPECT_DOUBLE_EQ(s.stddev(), std::sqrt(1.25));
  const StageSamples single{"y", {7.0}};
  EXPECT_DOUBLE_EQ(single.mean(), 7.0);
  EXPECT_DOUBLE_EQ(single.stddev(), 0.0);
  const StageSamples empty{"z", {}};
  EXPECT_DOUBLE_EQ(empty.mean(), 0.0);
  EXPECT_DOUBLE_EQ(empty.stddev(), 0.0);
}

TEST(TimingReportTest, StageLookupThrowsOnUnknownName) {
  const TimingReport t = sample_timing_reports()[0];
  EXPECT_EQ(t.stage("gram").seconds.size(), 3u);
  EXPECT_THROW(t.stage("nope"), ValidationError);
}

TEST(ReportFormatTest, DerivedFromExtension) {
  EXPECT_EQ(report_format_from_path("out/results.csv"), ReportFormat::csv);
  EXPECT_EQ(report_format_from_path("a.b/results.jsonl"), ReportFormat::jsonl);
  EXPECT_THROW(report_format_from_path("results.txt"), ValidationError);
  EXPECT_THROW(report_format_from_path("no_extension"), ValidationError);
}

TEST_F(ReportTest, CvReportsRoundTripThroughCsv) {
  const auto reports = sample_cv_reports();
  emit_cv_reports(reports, path("cv.csv"), ReportFormat::csv);
  const auto back = parse_cv_reports(path("cv.csv"), ReportFormat::csv);
  ASSERT_EQ(back.size(), reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    EXPECT_EQ(back[i].best_c, reports[i].best_c);
    EXPECT_EQ(back[i].best_p, reports[i].best_p);
    EXPECT_EQ(back[i].fold_aucs, reports[i].fold_aucs);
    EXPECT_EQ(back[i].mean_auc, reports[i].mean_auc);
    EXPECT_EQ(back[i].std_auc, reports[i].std_auc);
  }
}

TEST_F(ReportTest, CvReportsRoundTripThroughJsonl) {
  const auto reports = sample_cv_reports();
  emit_cv_reports(reports, path("cv.jsonl"), ReportFormat::jsonl);
  EXPECT_EQ(line_count(path("cv.jsonl")), reports.size());
  const auto back = parse_cv_reports(path("cv.jsonl"), ReportFormat::jsonl);
  ASSERT_EQ(back.size(), reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    EXPECT_EQ(back[i].fold_aucs, reports[i].fold_aucs);
    EXPECT_EQ(back[i].mean_auc, reports[i].mean_auc);
  }
}

TEST_F(ReportTest, TimingReportsRoundTripThroughCsv) {
  const auto reports = sample_timing_reports();
  emit_timing_reports(reports, path("t.csv"), ReportFormat::csv);
  const auto back = parse_timing_reports(path("t.csv"), ReportFormat::csv);
  ASSERT_EQ(back.size(), reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    EXPECT_EQ(back[i].label, reports[i].label);
    EXPECT_EQ(back[i].repeats, reports[i].repeats);
    ASSERT_EQ(back[i].stages.size(), reports[i].stages.size());
    for (std::size_t s = 0; s < reports[i].stages.size(); ++s) {
      EXPECT_EQ(back[i].stages[s].stage, reports[i].stages[s].stage);
      EXPECT_EQ(back[i].stages[s].seconds, reports[i].stages[s].seconds);
    }
  }
}

TEST_F(ReportTest, TimingReportsRoundTripThroughJsonl) {
  const auto reports = sample_timing_reports();
  emit_timing_reports(reports, path("t.jsonl"), ReportFormat::jsonl);
  EXPECT_EQ(line_count(path("t.jsonl")), reports.size());
  const auto back = parse_timing_reports(path("t.jsonl"), ReportFormat::jsonl);
  ASSERT_EQ(back.size(), reports.size());
  EXPECT_EQ(back[0], reports[0]);
  EXPECT_EQ(back[1], reports[1]);
}

TEST_F(ReportTest, EmptySeriesWritesHeaderOnlyCsv) {
  emit_cv_reports({}, path("empty_cv.csv"), ReportFormat::csv);
  EXPECT_EQ(line_count(path("empty_cv.csv")), 1u);
  EXPECT_TRUE(parse_cv_reports(path("empty_cv.csv"), ReportFormat::csv).empty());

  emit_timing_reports({}, path("empty_t.csv"), ReportFormat::csv);
  EXPECT_EQ(line_count(path("empty_t.csv")), 1u);
  EXPECT_TRUE(parse_timing_reports(path("empty_t.csv"), ReportFormat::csv).empty());

  emit_cv_reports({}, path("empty.jsonl"), ReportFormat::jsonl);
  EXPECT_EQ(line_count(path("empty.jsonl")), 0u);
}

TEST_F(ReportTest, ParseRejectsWrongHeaderAndMalformedRows) {
  {
    std::ofstream out(path("bad_header.csv"));
    out << "not,the,expected,header\n";
  }
  EXPECT_THROW(parse_cv_reports(path("bad_header.csv"), ReportFormat::csv), ValidationError);
  EXPECT_THROW(parse_timing_reports(path("bad_header.csv"), ReportFormat::csv), ValidationError);
  {
    std::ofstream out(path("bad_row.jsonl"));
    out << "{\"best_c\": \"oops\"}\n";
  }
  EXPECT_THROW(parse_cv_reports(path("bad_row.jsonl"), ReportFormat::jsonl), ValidationError);
  EXPECT_THROW(parse_cv_reports(path("does_not_exist.csv"), ReportFormat::csv), IoError);
}

// Doubles survive the CSV path exactly: %.17g printing, strtod parsing.
TEST_F(ReportTest, CsvValuesAreLosslessForAwkwardDoubles) {
  CvReport r;
  r.best_c = 0.1;  // not representable exactly; must still round trip
  r.best_p = 2;
  r.fold_aucs = {1.0 / 3.0, 2.0 / 3.0, 5e-324};
  r.mean_auc = 0.3333333333333333;
  r.std_auc = 1e-17;
  emit_cv_reports({r}, path("loss.csv"), ReportFormat::csv);
  const auto back = parse_cv_reports(path("loss.csv"), ReportFormat::csv);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].best_c, r.best_c);
  EXPECT_EQ(back[0].fold_aucs, r.fold_aucs);
  EXPECT_EQ(back[0].std_auc, r.std_auc);
}

}  // namespace
}  // namespace flake
