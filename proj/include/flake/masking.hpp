#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "flake/error.hpp"
#include "flake/linalg.hpp"
#include "flake/matrix.hpp"
#include "flake/rng.hpp"

namespace flake {

/// Everything an input party needs to mask data: the shared mask n_mask
/// (identical for all parties deriving from the same seed), this party's
/// private left inverse for the current iteration, and the cached symmetric
/// square root of n_mask * n_maskᵀ.
struct MaskContext {
  std::uint64_t seed = 0;
  MaskDims dims;
  std::string party_id;
  std::uint64_t party_private_seed = 0;
  Matrix n_mask;         // k x f, shared
  Matrix base_left_inv;  // f x k, pseudoinverse of n_mask
  Matrix left_inv;       // f x k, private, fresh each iteration
  Matrix sqrt_nnt;       // k x k, constant while n_mask is constant
  std::uint32_t iteration = 0;
};

/// Masked payload as it leaves an input party. Only (sample_count, k) is
/// observable; the feature count never appears.
struct MaskedMatrix {
  Matrix payload;  // n x k
  std::string party_id;
  std::uint32_t iteration = 0;

  std::size_t sample_count() const { return payload.rows(); }
};

/// The full family of left inverses of n_mask is l0 + m·(I − n_mask·l0)
/// for arbitrary f x k matrices m; this evaluates one member.
inline Matrix randomize_left_inverse(const Matrix& n_mask, const Matrix& l0, const Matrix& m) {
  const std::size_t k = n_mask.rows();
  const std::size_t f = n_mask.cols();
  if (l0.rows() != f || l0.cols() != k || m.rows() != f || m.cols() != k) {
    throw DimensionError("randomize_left_inverse: l0 and m must be f x k");
  }
  return l0 + m * (Matrix::identity(k) - n_mask * l0);
}

/// Draws the perturbation from the party's private generator.
inline Matrix randomize_left_inverse(const Matrix& n_mask, const Matrix& l0, CounterRng& rng) {
  Matrix m(l0.rows(), l0.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rng.next_gaussian();
  return randomize_left_inverse(n_mask, l0, m);
}

/// Derives the shared mask from the seed and this party's initial private
/// left inverse (iteration 0). The pseudoinverse and square root are cached
/// in the context; both depend only on n_mask, which never changes.
inline MaskContext build_mask_context(std::uint64_t seed, const MaskDims& dims,
                                      std::string party_id, std::uint64_t party_private_seed) {
  MaskContext ctx;
  ctx.seed = seed;
  ctx.dims = dims;
  ctx.party_id = std::move(party_id);
  ctx.party_private_seed = party_private_seed;
  ctx.n_mask = random_full_rank(seed, dims);
  ctx.base_left_inv = pseudo_inverse(ctx.n_mask);
  ctx.sqrt_nnt = sym_sqrt(ctx.n_mask);
  ctx.iteration = 0;
  CounterRng rng(party_private_seed, ctx.iteration);
  ctx.left_inv = randomize_left_inverse(ctx.n_mask, ctx.base_left_inv, rng);
  return ctx;
}

/// New context for the next iteration: same mask, fresh private left
/// inverse, so re-submitted data never masks to the same bytes.
inline MaskContext advance_iteration(const MaskContext& ctx) {
  MaskContext next = ctx;
  next.iteration = ctx.iteration + 1;
  CounterRng rng(next.party_private_seed, next.iteration);
  next.left_inv = randomize_left_inverse(next.n_mask, next.base_left_inv, rng);
  return next;
}

/// Rejects all-zero rows before masking; a zero row would survive masking
/// as a zero row and reveal itself.
inline void validate_rows(const Matrix& data) {
  std::string offenders;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    bool all_zero = true;
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (data(i, j) != 0.0) {
        all_zero = false;
        break;
      }
    }
    if (all_zero) {
      if (!offenders.empty()) offenders += ", ";
      offenders += std::to_string(i);
    }
  }
  if (!offenders.empty()) throw ValidationError("all-zero rows not allowed: rows " + offenders);
}

/// Masks local data: payload = data · left_inv · sqrt_nnt, an n x k matrix
/// whose pairwise products with other parties' payloads reproduce the
/// plaintext products exactly.
inline MaskedMatrix mask(const Matrix& data, const MaskContext& ctx) {
  if (data.cols() != ctx.dims.f) {
    throw DimensionError("mask: data has " + std::to_string(data.cols()) + " columns, context expects " +
                         std::to_string(ctx.dims.f));
  }
  validate_rows(data);
  MaskedMatrix out;
  out.payload = (data * ctx.left_inv) * ctx.sqrt_nnt;
  out.party_id = ctx.party_id;
  out.iteration = ctx.iteration;
  return out;
}

}  // namespace flake
