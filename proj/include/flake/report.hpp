#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flake/data.hpp"
#include "flake/error.hpp"
#include "flake/svm.hpp"

namespace flake {

/// Wall-clock samples for one pipeline stage, one entry per repeat.
struct StageSamples {
  std::string stage;
  std::vector<double> seconds;

  double mean() const {
    if (seconds.empty()) return 0.0;
    double sum = 0.0;
    for (double s : seconds) sum += s;
    return sum / static_cast<double>(seconds.size());
  }

  /// Population standard deviation, consistent with CvReport::std_auc.
  double stddev() const {
    if (seconds.empty()) return 0.0;
    const double m = mean();
    double acc = 0.0;
    for (double s : seconds) acc += (s - m) * (s - m);
    return std::sqrt(acc / static_cast<double>(seconds.size()));
  }

  bool operator==(const StageSamples&) const = default;
};

/// One benchmark record: a label such as "n=500" or "round=2" plus the
/// repeated timings of every measured stage.
struct TimingReport {
  std::string label;
  std::size_t repeats = 0;
  std::vector<StageSamples> stages;

  const StageSamples& stage(const std::string& name) const {
    for (const StageSamples& s : stages) {
      if (s.stage == name) return s;
    }
    throw ValidationError("timing report has no stage '" + name + "'");
  }

  bool operator==(const TimingReport&) const = default;
};

enum class ReportFormat { csv, jsonl };

inline ReportFormat report_format_from_path(const std::string& path) {
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") return ReportFormat::jsonl;
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return ReportFormat::csv;
  throw ValidationError("cannot infer report format from path: " + path);
}

inline void to_json(nlohmann::json& j, const CvReport& r) {
  j = nlohmann::json{{"best_c", r.best_c},
                     {"best_p", r.best_p},
                     {"fold_aucs", r.fold_aucs},
                     {"mean_auc", r.mean_auc},
                     {"std_auc", r.std_auc}};
}

inline void from_json(const nlohmann::json& j, CvReport& r) {
  j.at("best_c").get_to(r.best_c);
  j.at("best_p").get_to(r.best_p);
  j.at("fold_aucs").get_to(r.fold_aucs);
  j.at("mean_auc").get_to(r.mean_auc);
  j.at("std_auc").get_to(r.std_auc);
}

inline void to_json(nlohmann::json& j, const StageSamples& s) {
  j = nlohmann::json{{"stage", s.stage}, {"seconds", s.seconds}};
}

inline void from_json(const nlohmann::json& j, StageSamples& s) {
  j.at("stage").get_to(s.stage);
  j.at("seconds").get_to(s.seconds);
}

inline void to_json(nlohmann::json& j, const TimingReport& r) {
  j = nlohmann::json{{"label", r.label}, {"repeats", r.repeats}, {"stages", r.stages}};
}

inline void from_json(const nlohmann::json& j, TimingReport& r) {
  j.at("label").get_to(r.label);
  j.at("repeats").get_to(r.repeats);
  j.at("stages").get_to(r.stages);
}

namespace reportdetail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report file: " + path);
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

template <typename T>
std::vector<T> parse_jsonl(const std::string& path) {
  std::vector<T> out;
  for (const std::string& line : read_lines(path)) {
    try {
      out.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed jsonl record in " + path + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void emit_jsonl(const std::vector<T>& records, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const T& r : records) out << nlohmann::json(r).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace reportdetail

/// CSV layout: one row per report; fold AUCs live in one semicolon-joined
/// cell so the row count equals the record count.
inline void emit_cv_reports(const std::vector<CvReport>& reports, const std::string& path,
                            ReportFormat format) {
  if (format == ReportFormat::jsonl) {
    reportdetail::emit_jsonl(reports, path);
    return;
  }
  std::ofstream out = reportdetail::open_out(path);
  out << "best_c,best_p,mean_auc,std_auc,fold_aucs\n";
  for (const CvReport& r : reports) {
    out << datadetail::format_double(r.best_c) << ',' << r.best_p << ','
        << datadetail::format_double(r.mean_auc) << ',' << datadetail::format_double(r.std_auc) << ',';
    for (std::size_t i = 0; i < r.fold_aucs.size(); ++i) {
      if (i > 0) out << ';';
      out << datadetail::format_double(r.fold_aucs[i]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<CvReport> parse_cv_reports(const std::string& path, ReportFormat format) {
  if (format == ReportFormat::jsonl) return reportdetail::parse_jsonl<CvReport>(path);
  const std::vector<std::string> lines = reportdetail::read_lines(path);
  if (lines.empty() || lines[0] != "best_c,best_p,mean_auc,std_auc,fold_aucs") {
    throw ValidationError("unexpected cv report header in " + path);
  }
  std::vector<CvReport> out;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::vector<std::string> cells = datadetail::split_csv_line(lines[n]);
    if (cells.size() != 5) throw ValidationError("malformed cv report row in " + path);
    CvReport r;
    r.best_c = datadetail::parse_double_cell(cells[0], n, 0);
    r.best_p = static_cast<int>(datadetail::parse_double_cell(cells[1], n, 1));
    r.mean_auc = datadetail::parse_double_cell(cells[2], n, 2);
    r.std_auc = datadetail::parse_double_cell(cells[3], n, 3);
    if (!cells[4].empty()) {
      std::stringstream ss(cells[4]);
      std::string part;
      while (std::getline(ss, part, ';')) {
        r.fold_aucs.push_back(datadetail::parse_double_cell(part, n, 4));
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// CSV layout: one row per (report, stage, repeat); an empty series still
/// produces the header line.
inline void emit_timing_reports(const std::vector<TimingReport>& reports, const std::string& path,
                                ReportFormat format) {
  if (format == ReportFormat::jsonl) {
    reportdetail::emit_jsonl(reports, path);
    return;
  }
  std::ofstream out = reportdetail::open_out(path);
  out << "record,label,repeats,stage,sample_index,seconds\n";
  for (std::size_t rec = 0; rec < reports.size(); ++rec) {
    const TimingReport& r = reports[rec];
    for (const StageSamples& s : r.stages) {
      for (std::size_t i = 0; i < s.seconds.size(); ++i) {
        out << rec << ',' << r.label << ',' << r.repeats << ',' << s.stage << ',' << i << ','
            << datadetail::format_double(s.seconds[i]) << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<TimingReport> parse_timing_reports(const std::string& path, ReportFormat format) {
  if (format == ReportFormat::jsonl) return reportdetail::parse_jsonl<TimingReport>(path);
  const std::vector<std::string> lines = reportdetail::read_lines(path);
  if (lines.empty() || lines[0] != "record,label,repeats,stage,sample_index,seconds") {
    throw ValidationError("unexpected timing report header in " + path);
  }
  std::vector<TimingReport> out;
  std::size_t current_record = 0;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::vector<std::string> cells = datadetail::split_csv_line(lines[n]);
    if (cells.size() != 6) throw ValidationError("malformed timing report row in " + path);
    const auto record = static_cast<std::size_t>(std::stoull(cells[0]));
    const auto repeats = static_cast<std::size_t>(std::stoull(cells[2]));
    if (out.empty() || record != current_record) {
      out.push_back(TimingReport{cells[1], repeats, {}});
      current_record = record;
    }
    TimingReport& r = out.back();
    if (r.stages.empty() || r.stages.back().stage != cells[3]) {
      r.stages.push_back(StageSamples{cells[3], {}});
    }
    r.stages.back().seconds.push_back(datadetail::parse_double_cell(cells[5], n, 5));
  }
  return out;
}

}  // namespace flake
