#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "flake/error.hpp"
#include "flake/linalg.hpp"
#include "flake/masking.hpp"
#include "flake/matrix.hpp"

namespace flake {

/// One contiguous run of Gram rows contributed by a single submission.
/// A party that sends more data later owns several segments.
struct GramSegment {
  std::string party_id;
  std::size_t sample_count = 0;
  std::uint32_t iteration = 0;

  bool operator==(const GramSegment&) const = default;
};

/// Sub-rectangle of the Gram value matrix.
struct BlockRange {
  std::size_t row_offset = 0;
  std::size_t row_count = 0;
  std::size_t col_offset = 0;
  std::size_t col_count = 0;

  bool operator==(const BlockRange&) const = default;
};

/// Pairwise product of two masked payloads; equals the plaintext product of
/// the underlying data by construction of the masking.
inline Matrix cross_block(const MaskedMatrix& a, const MaskedMatrix& b) {
  if (a.payload.cols() != b.payload.cols()) {
    throw ProtocolError("cross_block: payload widths differ (" + std::to_string(a.payload.cols()) +
                        " vs " + std::to_string(b.payload.cols()) +
                        "); parties used different seeds or mask widths");
  }
  return a.payload.times_transposed(b.payload);
}

/// Symmetric block matrix of pairwise sample products across all segments,
/// with an index describing which rows/columns belong to whom.
class GramMatrix {
 public:
  GramMatrix() = default;
  GramMatrix(std::vector<GramSegment> segments, Matrix values)
      : segments_(std::move(segments)), values_(std::move(values)) {
    std::size_t total = 0;
    for (const auto& s : segments_) total += s.sample_count;
    if (values_.rows() != total || values_.cols() != total) {
      throw DimensionError("GramMatrix: values shape does not match segment totals");
    }
  }

  const std::vector<GramSegment>& segments() const { return segments_; }
  const Matrix& values() const { return values_; }
  std::size_t total_samples() const { return values_.rows(); }
  bool empty() const { return values_.rows() == 0; }

  std::size_t segment_offset(std::size_t seg) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < seg; ++i) off += segments_[i].sample_count;
    return off;
  }

  BlockRange block_range(std::size_t seg_i, std::size_t seg_j) const {
    return BlockRange{segment_offset(seg_i), segments_[seg_i].sample_count, segment_offset(seg_j),
                      segments_[seg_j].sample_count};
  }

  /// Party-pair view of the tiling; a pair maps to several ranges once a
  /// party owns several segments.
  std::map<std::pair<std::string, std::string>, std::vector<BlockRange>> block_index() const {
    std::map<std::pair<std::string, std::string>, std::vector<BlockRange>> index;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      for (std::size_t j = 0; j < segments_.size(); ++j) {
        index[{segments_[i].party_id, segments_[j].party_id}].push_back(block_range(i, j));
      }
    }
    return index;
  }

  bool operator==(const GramMatrix&) const = default;

 private:
  std::vector<GramSegment> segments_;
  Matrix values_;
};

/// Assembles the Gram matrix from precomputed upper-triangle blocks keyed by
/// segment index pair (i, j), i <= j. The lower triangle is filled by
/// transposition.
inline GramMatrix assemble_gram(const std::vector<GramSegment>& order,
                                const std::map<std::pair<std::size_t, std::size_t>, Matrix>& upper_blocks) {
  std::string missing;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i; j < order.size(); ++j) {
      if (!upper_blocks.count({i, j})) {
        if (!missing.empty()) missing += ", ";
        missing += "(" + order[i].party_id + ", " + order[j].party_id + ")";
      }
    }
  }
  if (!missing.empty()) throw ProtocolError("assemble_gram: missing blocks for pairs " + missing);

  std::size_t total = 0;
  for (const auto& s : order) total += s.sample_count;
  Matrix values(total, total);
  std::size_t row_off = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::size_t col_off = row_off;
    for (std::size_t j = i; j < order.size(); ++j) {
      const Matrix& block = upper_blocks.at({i, j});
      if (block.rows() != order[i].sample_count || block.cols() != order[j].sample_count) {
        throw DimensionError("assemble_gram: block (" + std::to_string(i) + ", " + std::to_string(j) +
                             ") has wrong shape");
      }
      values.set_block(row_off, col_off, block);
      if (i != j) values.set_block(col_off, row_off, block.transposed());
      col_off += order[j].sample_count;
    }
    row_off += order[i].sample_count;
  }
  return GramMatrix(order, std::move(values));
}

/// Computes all pairwise blocks from the payloads, then assembles.
inline GramMatrix assemble_gram(const std::vector<MaskedMatrix>& payloads) {
  std::vector<GramSegment> order;
  order.reserve(payloads.size());
  for (const auto& p : payloads) {
    order.push_back(GramSegment{p.party_id, p.sample_count(), p.iteration});
  }
  std::map<std::pair<std::size_t, std::size_t>, Matrix> blocks;
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    for (std::size_t j = i; j < payloads.size(); ++j) {
      blocks.emplace(std::make_pair(i, j), cross_block(payloads[i], payloads[j]));
    }
  }
  return assemble_gram(order, blocks);
}

/// Function-party state: the running Gram matrix plus every masked payload
/// received so far. Payloads are retained per party to serve future
/// extensions and are erased wholesale when a party is removed.
class GramStore {
 public:
  bool has_party(const std::string& party_id) const {
    return std::find(registered_.begin(), registered_.end(), party_id) != registered_.end();
  }

  std::vector<std::string> stored_party_ids() const { return registered_; }

  std::vector<MaskedMatrix> stored_payloads(const std::string& party_id) const {
    if (!has_party(party_id)) throw ProtocolError("GramStore: unknown party " + party_id);
    std::vector<MaskedMatrix> out;
    for (const auto& p : segment_payloads_) {
      if (p.party_id == party_id) out.push_back(p);
    }
    return out;
  }

  const GramMatrix& gram() const { return gram_; }

  /// Registers a new party and appends its block row/column.
  void add_party(const MaskedMatrix& d) {
    if (has_party(d.party_id)) throw ProtocolError("GramStore: party " + d.party_id + " already registered");
    registered_.push_back(d.party_id);
    append_segment(d);
  }

  /// Appends more samples from an already-registered party. Zero new rows
  /// leave the Gram matrix untouched.
  void extend_with_data(const MaskedMatrix& x) {
    if (!has_party(x.party_id)) throw ProtocolError("GramStore: unknown party " + x.party_id);
    if (x.sample_count() == 0) return;
    append_segment(x);
  }

  /// Unlearning: drops every Gram row/column and every stored payload that
  /// came from the party. Remaining entries are not recomputed.
  void remove_party(const std::string& party_id) {
    if (!has_party(party_id)) throw ProtocolError("GramStore: unknown party " + party_id);

    std::vector<bool> keep_row(gram_.total_samples(), true);
    std::vector<GramSegment> new_segments;
    std::vector<MaskedMatrix> new_payloads;
    std::size_t off = 0;
    for (std::size_t s = 0; s < gram_.segments().size(); ++s) {
      const GramSegment& seg = gram_.segments()[s];
      if (seg.party_id == party_id) {
        std::fill(keep_row.begin() + off, keep_row.begin() + off + seg.sample_count, false);
      } else {
        new_segments.push_back(seg);
        new_payloads.push_back(segment_payloads_[s]);
      }
      off += seg.sample_count;
    }

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < keep_row.size(); ++i) {
      if (keep_row[i]) kept.push_back(i);
    }
    Matrix values(kept.size(), kept.size());
    const Matrix& old = gram_.values();
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = 0; j < kept.size(); ++j) values(i, j) = old(kept[i], kept[j]);
    }
    gram_ = GramMatrix(std::move(new_segments), std::move(values));
    segment_payloads_ = std::move(new_payloads);
    std::erase(registered_, party_id);
  }

 private:
  void check_width(const MaskedMatrix& m) const {
    for (const auto& p : segment_payloads_) {
      if (p.payload.cols() != m.payload.cols()) {
        throw ProtocolError("GramStore: payload width " + std::to_string(m.payload.cols()) + " from " +
                            m.party_id + " does not match established width " +
                            std::to_string(p.payload.cols()));
      }
    }
  }

  // Grows the value matrix by one segment: existing entries are copied
  // verbatim, new cross products fill the fresh row/column strip.
  void append_segment(const MaskedMatrix& m) {
    check_width(m);
    const std::size_t old_total = gram_.total_samples();
    const std::size_t n_new = m.sample_count();
    Matrix values(old_total + n_new, old_total + n_new);
    values.set_block(0, 0, gram_.values());

    std::size_t off = 0;
    for (std::size_t s = 0; s < gram_.segments().size(); ++s) {
      const Matrix strip = cross_block(m, segment_payloads_[s]);  // n_new x segment rows
      values.set_block(old_total, off, strip);
      values.set_block(off, old_total, strip.transposed());
      off += gram_.segments()[s].sample_count;
    }
    values.set_block(old_total, old_total, cross_block(m, m));

    std::vector<GramSegment> segments = gram_.segments();
    segments.push_back(GramSegment{m.party_id, n_new, m.iteration});
    gram_ = GramMatrix(std::move(segments), std::move(values));
    segment_payloads_.push_back(m);
  }

  GramMatrix gram_;
  std::vector<std::string> registered_;         // insertion order
  std::vector<MaskedMatrix> segment_payloads_;  // aligned with gram_.segments()
};

/// Symmetry and positive-semidefiniteness check; throws NumericError when
/// the values cannot be a Gram matrix.
inline void validate_gram(const GramMatrix& g, double sym_tol = 1e-8, double psd_tol = 1e-6) {
  if (g.empty()) return;
  const Matrix& v = g.values();
  if (v.max_abs_diff(v.transposed()) > sym_tol) throw NumericError("validate_gram: values not symmetric");
  const auto eig = sym_eigenvalues(v);
  const double largest = std::max(eig.back(), 0.0);
  if (eig.front() < -psd_tol * largest) {
    throw NumericError("validate_gram: smallest eigenvalue " + std::to_string(eig.front()) +
                       " too negative");
  }
}

/// Kernel selection carried through configs and reports.
struct KernelSpec {
  enum class Kind { linear, polynomial, rbf };
  Kind kind = Kind::linear;
  double v = 0.0;     // polynomial offset, >= 0
  int p = 1;          // polynomial degree, >= 1
  double sigma = 1.0;  // rbf width, > 0

  bool operator==(const KernelSpec&) const = default;
};

/// Entrywise (g_ij + v)^p. Integer powers by repeated multiplication.
inline Matrix poly_kernel(const Matrix& gram_values, double v, int p) {
  if (v < 0.0) throw ValidationError("poly_kernel: offset v must be >= 0");
  if (p < 1) throw ValidationError("poly_kernel: degree p must be >= 1");
  Matrix out(gram_values.rows(), gram_values.cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      const double base = gram_values(i, j) + v;
      double acc = base;
      for (int e = 1; e < p; ++e) acc *= base;
      out(i, j) = acc;
    }
  }
  return out;
}

inline Matrix poly_kernel(const GramMatrix& g, double v, int p) { return poly_kernel(g.values(), v, p); }

/// Entrywise exp(-(g_ii - 2 g_ij + g_jj) / (2 sigma^2)); the numerator is
/// the squared sample distance recovered from Gram entries.
inline Matrix rbf_kernel(const Matrix& gram_values, double sigma) {
  if (sigma <= 0.0) throw ValidationError("rbf_kernel: sigma must be > 0");
  if (gram_values.rows() != gram_values.cols()) {
    throw DimensionError("rbf_kernel: square Gram matrix required");
  }
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  Matrix out(gram_values.rows(), gram_values.cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      const double dist2 = gram_values(i, i) - 2.0 * gram_values(i, j) + gram_values(j, j);
      out(i, j) = std::exp(-dist2 * inv_two_sigma2);
    }
  }
  return out;
}

inline Matrix rbf_kernel(const GramMatrix& g, double sigma) { return rbf_kernel(g.values(), sigma); }

/// Dispatch on the kernel kind.
inline Matrix kernel_from_gram(const Matrix& gram_values, const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelSpec::Kind::linear:
      return gram_values;
    case KernelSpec::Kind::polynomial:
      return poly_kernel(gram_values, spec.v, spec.p);
    case KernelSpec::Kind::rbf:
      return rbf_kernel(gram_values, spec.sigma);
  }
  throw ValidationError("kernel_from_gram: unknown kernel kind");
}

}  // namespace flake
