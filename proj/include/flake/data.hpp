#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flake/error.hpp"
#include "flake/matrix.hpp"
#include "flake/rng.hpp"
#include "flake/wire.hpp"

namespace flake {

struct Dataset {
  Matrix features;
  std::vector<int> labels;

  bool operator==(const Dataset&) const = default;
};

/// Balanced multiclass Gaussian blobs: class means are seeded unit vectors
/// scaled by `separation`, within-class covariance is the identity. Sample i
/// belongs to class i mod classes, so any remainder spreads round-robin.
/// Output is deterministic per seed and never contains an all-zero row.
inline Dataset gen_synthetic(std::size_t n, std::size_t f, std::size_t classes, std::uint64_t seed,
                             double separation = 2.0) {
  if (n < 1 || f < 1) throw ValidationError("gen_synthetic: need n >= 1 and f >= 1");
  if (classes < 2) throw ValidationError("gen_synthetic: need at least 2 classes");
  if (classes > n) {
    throw ValidationError("gen_synthetic: " + std::to_string(classes) + " classes exceed " +
                          std::to_string(n) + " samples");
  }

  std::vector<std::vector<double>> means(classes, std::vector<double>(f));
  for (std::size_t c = 0; c < classes; ++c) {
    CounterRng rng(seed, 0xC1A55000ULL + c);
    double norm2 = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      means[c][j] = rng.next_gaussian();
      norm2 += means[c][j] * means[c][j];
    }
    const double scale = separation / std::sqrt(norm2 > 0.0 ? norm2 : 1.0);
    for (std::size_t j = 0; j < f; ++j) means[c][j] *= scale;
  }

  Dataset out;
  out.features = Matrix(n, f);
  out.labels.resize(n);
  CounterRng rng(seed, 0x5A4D7135ULL);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    out.labels[i] = static_cast<int>(c);
    bool all_zero = true;
    for (std::size_t j = 0; j < f; ++j) {
      out.features(i, j) = means[c][j] + rng.next_gaussian();
      if (out.features(i, j) != 0.0) all_zero = false;
    }
    // A zero row has probability zero but would poison masking downstream.
    if (all_zero) out.features(i, 0) = 1e-12;
  }
  return out;
}

namespace datadetail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline double parse_double_cell(const std::string& cell, std::size_t row, std::size_t col) {
  // strtod instead of std::stod: stod throws out_of_range on ERANGE, which
  // glibc also raises for representable subnormals such as 5e-324.
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  const bool consumed_all = !cell.empty() && end == begin + cell.size();
  if (!consumed_all || !std::isfinite(v)) {
    throw ValidationError("csv row " + std::to_string(row) + ", column " + std::to_string(col) +
                          ": cell '" + cell + "' is not numeric");
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace datadetail

/// Parses a rectangular numeric CSV with a header row. Every column except
/// `label_column` becomes a feature, in header order; labels must be
/// integers.
inline Dataset load_csv(const std::string& path, const std::string& label_column = "label") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv file is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = datadetail::split_csv_line(line);

  std::size_t label_index = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) label_index = i;
  }
  if (label_index == header.size()) {
    throw ValidationError("csv is missing label column '" + label_column + "'");
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = datadetail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("csv row " + std::to_string(row_number) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header.size()));
    }
    std::vector<double> row;
    row.reserve(header.size() - 1);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double v = datadetail::parse_double_cell(cells[i], row_number, i);
      if (i == label_index) {
        if (std::abs(v - std::round(v)) > 1e-9) {
          throw ValidationError("csv row " + std::to_string(row_number) +
                                ": label '" + cells[i] + "' is not an integer");
        }
        labels.push_back(static_cast<int>(std::llround(v)));
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }

  Dataset out;
  out.features = Matrix(rows.size(), header.size() - 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) out.features(i, j) = rows[i][j];
  }
  out.labels = std::move(labels);
  return out;
}

/// Writes features as f0..f{n-1} plus the label column; doubles are printed
/// with enough digits that load_csv(save_csv(d)) == d.
inline void save_csv(const Dataset& data, const std::string& path,
                     const std::string& label_column = "label") {
  if (data.labels.size() != data.features.rows()) {
    throw ValidationError("save_csv: " + std::to_string(data.labels.size()) + " labels for " +
                          std::to_string(data.features.rows()) + " rows");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write csv file: " + path);
  for (std::size_t j = 0; j < data.features.cols(); ++j) out << 'f' << j << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < data.features.rows(); ++i) {
    for (std::size_t j = 0; j < data.features.cols(); ++j) {
      out << datadetail::format_double(data.features(i, j)) << ',';
    }
    out << data.labels[i] << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

/// Matrix export: headerless numeric CSV, lossless like save_csv.
inline void save_matrix_csv(const Matrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write csv file: " + path);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << datadetail::format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline Matrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = datadetail::split_csv_line(line);
    if (!rows.empty() && cells.size() != rows.front().size()) {
      throw ValidationError("csv row " + std::to_string(row_number) + " is ragged");
    }
    std::vector<double> row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      row.push_back(datadetail::parse_double_cell(cells[i], row_number, i));
    }
    rows.push_back(std::move(row));
  }
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

/// Matrix export in the compressed wire encoding, bit-exact.
inline void save_matrix_binary(const Matrix& m, const std::string& path) {
  const std::vector<std::uint8_t> wire = encode_matrix(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write matrix file: " + path);
  out.write(reinterpret_cast<const char*>(wire.data()), static_cast<std::streamsize>(wire.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline Matrix load_matrix_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open matrix file: " + path);
  std::vector<std::uint8_t> wire((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_matrix(wire);
}

}  // namespace flake
