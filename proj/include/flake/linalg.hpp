#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "flake/error.hpp"
#include "flake/matrix.hpp"
#include "flake/rng.hpp"

namespace flake {

/// Mask dimensions: f features are hidden inside a width-k masked payload.
struct MaskDims {
  std::size_t f = 0;  // feature count
  std::size_t k = 0;  // masked width, k > f

  MaskDims() = default;
  MaskDims(std::size_t f_, std::size_t k_) : f(f_), k(k_) {
    if (f < 1 || k <= f) throw DimensionError("mask dims require k > f >= 1");
  }
  bool operator==(const MaskDims&) const = default;
};

/// Economy-size SVD: u (m x p) has orthonormal columns, s holds the p =
/// min(m, n) singular values in descending order, vt (p x n) has orthonormal
/// rows, and u * diag(s) * vt reconstructs the input.
struct SvdResult {
  Matrix u;
  std::vector<double> s;
  Matrix vt;
};

namespace detail {

inline double sign_transfer(double magnitude, double sign_of) {
  return sign_of >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
}

// Bidiagonalization + implicit-shift QR on the bidiagonal, for m >= n.
// `a` is overwritten with the economy U (m x n); returns singular values in
// `w` (unsorted, non-negative) and right vectors in `v` (n x n, columns).
inline void golub_reinsch(Matrix& a, std::vector<double>& w, Matrix& v) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  w.assign(n, 0.0);
  v = Matrix(n, n);
  std::vector<double> rv1(n, 0.0);

  double g = 0.0, scale = 0.0, anorm = 0.0;

  // Householder reduction to bidiagonal form.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t l = i + 1;
    rv1[i] = scale * g;
    g = scale = 0.0;
    if (i < m) {
      for (std::size_t k = i; k < m; ++k) scale += std::abs(a(k, i));
      if (scale != 0.0) {
        double s = 0.0;
        for (std::size_t k = i; k < m; ++k) {
          a(k, i) /= scale;
          s += a(k, i) * a(k, i);
        }
        double f = a(i, i);
        g = -sign_transfer(std::sqrt(s), f);
        const double h = f * g - s;
        a(i, i) = f - g;
        for (std::size_t j = l; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t k = i; k < m; ++k) acc += a(k, i) * a(k, j);
          f = acc / h;
          for (std::size_t k = i; k < m; ++k) a(k, j) += f * a(k, i);
        }
        for (std::size_t k = i; k < m; ++k) a(k, i) *= scale;
      }
    }
    w[i] = scale * g;
    g = scale = 0.0;
    if (i < m && i + 1 != n) {
      for (std::size_t k = l; k < n; ++k) scale += std::abs(a(i, k));
      if (scale != 0.0) {
        double s = 0.0;
        for (std::size_t k = l; k < n; ++k) {
          a(i, k) /= scale;
          s += a(i, k) * a(i, k);
        }
        double f = a(i, l);
        g = -sign_transfer(std::sqrt(s), f);
        const double h = f * g - s;
        a(i, l) = f - g;
        for (std::size_t k = l; k < n; ++k) rv1[k] = a(i, k) / h;
        for (std::size_t j = l; j < m; ++j) {
          double acc = 0.0;
          for (std::size_t k = l; k < n; ++k) acc += a(j, k) * a(i, k);
          for (std::size_t k = l; k < n; ++k) a(j, k) += acc * rv1[k];
        }
        for (std::size_t k = l; k < n; ++k) a(i, k) *= scale;
      }
    }
    anorm = std::max(anorm, std::abs(w[i]) + std::abs(rv1[i]));
  }

  // Accumulate right-hand transformations.
  for (std::size_t ii = n; ii-- > 0;) {
    const std::size_t i = ii;
    if (i + 1 < n) {
      const std::size_t l = i + 1;
      if (g != 0.0) {
        // Double division avoids possible underflow.
        for (std::size_t j = l; j < n; ++j) v(j, i) = (a(i, j) / a(i, l)) / g;
        for (std::size_t j = l; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t k = l; k < n; ++k) acc += a(i, k) * v(k, j);
          for (std::size_t k = l; k < n; ++k) v(k, j) += acc * v(k, i);
        }
      }
      for (std::size_t j = l; j < n; ++j) v(i, j) = v(j, i) = 0.0;
    }
    v(i, i) = 1.0;
    g = rv1[i];
  }

  // Accumulate left-hand transformations (economy U in place).
  for (std::size_t ii = std::min(m, n); ii-- > 0;) {
    const std::size_t i = ii;
    const std::size_t l = i + 1;
    g = w[i];
    for (std::size_t j = l; j < n; ++j) a(i, j) = 0.0;
    if (g != 0.0) {
      g = 1.0 / g;
      for (std::size_t j = l; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = l; k < m; ++k) acc += a(k, i) * a(k, j);
        const double f = (acc / a(i, i)) * g;
        for (std::size_t k = i; k < m; ++k) a(k, j) += f * a(k, i);
      }
      for (std::size_t j = i; j < m; ++j) a(j, i) *= g;
    } else {
      for (std::size_t j = i; j < m; ++j) a(j, i) = 0.0;
    }
    a(i, i) += 1.0;
  }

  // Diagonalize the bidiagonal form: QR iteration with implicit shifts.
  constexpr int kMaxSweeps = 60;
  for (std::size_t kk = n; kk-- > 0;) {
    const std::size_t k = kk;
    for (int its = 1;; ++its) {
      bool flag = true;
      std::size_t l = k + 1;
      std::size_t nm = 0;
      while (l-- > 0) {
        nm = l == 0 ? 0 : l - 1;
        if (std::abs(rv1[l]) + anorm == anorm) {
          flag = false;
          break;
        }
        if (std::abs(w[nm]) + anorm == anorm) break;
      }
      if (flag) {
        // Cancel rv1[l] when w[l-1] is negligible.
        double c = 0.0, s = 1.0;
        for (std::size_t i = l; i <= k; ++i) {
          double f = s * rv1[i];
          rv1[i] = c * rv1[i];
          if (std::abs(f) + anorm == anorm) break;
          g = w[i];
          double h = std::hypot(f, g);
          w[i] = h;
          h = 1.0 / h;
          c = g * h;
          s = -f * h;
          for (std::size_t j = 0; j < m; ++j) {
            const double y = a(j, nm);
            const double z = a(j, i);
            a(j, nm) = y * c + z * s;
            a(j, i) = z * c - y * s;
          }
        }
      }
      double z = w[k];
      if (l == k) {
        if (z < 0.0) {
          w[k] = -z;
          for (std::size_t j = 0; j < n; ++j) v(j, k) = -v(j, k);
        }
        break;
      }
      if (its == kMaxSweeps) {
        throw NumericError("svd: QR iteration did not converge after " + std::to_string(kMaxSweeps) +
                           " sweeps");
      }
      double x = w[l];
      nm = k - 1;
      double y = w[nm];
      g = rv1[nm];
      double h = rv1[k];
      double f = ((y - z) * (y + z) + (g - h) * (g + h)) / (2.0 * h * y);
      g = std::hypot(f, 1.0);
      f = ((x - z) * (x + z) + h * ((y / (f + sign_transfer(g, f))) - h)) / x;
      double c = 1.0, s = 1.0;
      for (std::size_t j = l; j <= nm; ++j) {
        const std::size_t i = j + 1;
        g = rv1[i];
        y = w[i];
        h = s * g;
        g = c * g;
        z = std::hypot(f, h);
        rv1[j] = z;
        c = f / z;
        s = h / z;
        f = x * c + g * s;
        g = g * c - x * s;
        h = y * s;
        y *= c;
        for (std::size_t jj = 0; jj < n; ++jj) {
          x = v(jj, j);
          z = v(jj, i);
          v(jj, j) = x * c + z * s;
          v(jj, i) = z * c - x * s;
        }
        z = std::hypot(f, h);
        w[j] = z;
        if (z != 0.0) {
          z = 1.0 / z;
          c = f * z;
          s = h * z;
        }
        f = c * g + s * y;
        x = c * y - s * g;
        for (std::size_t jj = 0; jj < m; ++jj) {
          y = a(jj, j);
          z = a(jj, i);
          a(jj, j) = y * c + z * s;
          a(jj, i) = z * c - y * s;
        }
      }
      rv1[l] = 0.0;
      rv1[k] = f;
      w[k] = x;
    }
  }
}

inline void sort_svd_descending(Matrix& u, std::vector<double>& s, Matrix& v) {
  const std::size_t p = s.size();
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });

  std::vector<double> s2(p);
  Matrix u2(u.rows(), u.cols());
  Matrix v2(v.rows(), v.cols());
  for (std::size_t c = 0; c < p; ++c) {
    s2[c] = s[order[c]];
    for (std::size_t r = 0; r < u.rows(); ++r) u2(r, c) = u(r, order[c]);
    for (std::size_t r = 0; r < v.rows(); ++r) v2(r, c) = v(r, order[c]);
  }
  s = std::move(s2);
  u = std::move(u2);
  v = std::move(v2);
}

}  // namespace detail

/// Economy SVD of an arbitrary nonempty matrix. Singular values come back
/// sorted descending; throws NumericError on non-convergence or non-finite
/// input.
inline SvdResult svd(const Matrix& input) {
  if (input.rows() < 1 || input.cols() < 1) throw DimensionError("svd: empty matrix");
  if (!input.all_finite()) throw NumericError("svd: input has non-finite entries");

  const bool wide = input.rows() < input.cols();
  Matrix work = wide ? input.transposed() : input;
  std::vector<double> s;
  Matrix v;
  detail::golub_reinsch(work, s, v);
  detail::sort_svd_descending(work, s, v);

  SvdResult out;
  if (wide) {
    // input = (work * S * v^T)^T = v * S * work^T
    out.u = std::move(v);
    out.vt = work.transposed();
  } else {
    out.u = std::move(work);
    out.vt = v.transposed();
  }
  out.s = std::move(s);
  return out;
}

/// Moore-Penrose pseudoinverse of a tall full-column-rank matrix,
/// V * S^-1 * U^T. The result L satisfies L * n = I.
inline Matrix pseudo_inverse(const Matrix& n) {
  if (n.rows() < n.cols()) throw DimensionError("pseudo_inverse: expects a tall (k x f) matrix");
  const SvdResult d = svd(n);
  const double smax = d.s.front();
  const double smin = d.s.back();
  if (smax <= 0.0 || smin <= smax * 1e-12) {
    throw NumericError("pseudo_inverse: rank-deficient input");
  }
  // V * diag(1/s) * U^T without forming intermediates: scale rows of U^T.
  Matrix sinv_ut = d.u.transposed();
  for (std::size_t i = 0; i < d.s.size(); ++i) {
    for (std::size_t j = 0; j < sinv_ut.cols(); ++j) sinv_ut(i, j) /= d.s[i];
  }
  return d.vt.transposed() * sinv_ut;
}

/// Symmetric square root of n * n^T for a tall full-rank n: R = U * S * U^T
/// from the economy SVD, so R * R = U S^2 U^T = n n^T. Computed from the
/// factor n, never by eigendecomposing the k x k product.
inline Matrix sym_sqrt(const Matrix& n) {
  if (n.rows() < n.cols()) throw DimensionError("sym_sqrt: expects a tall (k x f) matrix");
  const SvdResult d = svd(n);
  Matrix scaled_ut = d.u.transposed();  // p x k
  for (std::size_t i = 0; i < d.s.size(); ++i) {
    for (std::size_t j = 0; j < scaled_ut.cols(); ++j) scaled_ut(i, j) *= d.s[i];
  }
  Matrix r = d.u * scaled_ut;  // k x k
  // Enforce exact symmetry; U S U^T is symmetric up to roundoff.
  for (std::size_t i = 0; i < r.rows(); ++i) {
    for (std::size_t j = i + 1; j < r.cols(); ++j) {
      const double avg = 0.5 * (r(i, j) + r(j, i));
      r(i, j) = r(j, i) = avg;
    }
  }
  return r;
}

/// Seed-deterministic k x f standard-normal matrix with full column rank.
/// All parties calling this with the same (seed, dims) obtain bit-identical
/// matrices. A rank-deficient draw (never observed for Gaussian entries, but
/// checked) is retried on sub-streams 1..7 before giving up.
inline Matrix random_full_rank(std::uint64_t seed, const MaskDims& dims) {
  constexpr int kMaxAttempts = 8;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    CounterRng rng(seed, static_cast<std::uint64_t>(attempt));
    Matrix n(dims.k, dims.f);
    for (std::size_t i = 0; i < dims.k; ++i)
      for (std::size_t j = 0; j < dims.f; ++j) n(i, j) = rng.next_gaussian();
    const SvdResult d = svd(n);
    if (d.s.back() > 1e-8 * d.s.front()) return n;
  }
  throw NumericError("random_full_rank: exhausted redraw attempts");
}

/// Seeded f x f orthogonal matrix: Householder QR of a Gaussian draw with
/// the R diagonal sign-normalized (test support for rotation properties).
inline Matrix random_orthogonal(std::uint64_t seed, std::size_t f) {
  if (f < 1) throw DimensionError("random_orthogonal: f >= 1 required");
  CounterRng rng(seed, 0x6f727468);  // distinct stream from mask draws
  Matrix a(f, f);
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = 0; j < f; ++j) a(i, j) = rng.next_gaussian();

  // Householder QR, storing the reflectors.
  std::vector<std::vector<double>> reflectors;
  std::vector<double> taus;
  for (std::size_t j = 0; j < f; ++j) {
    std::vector<double> v(f - j);
    for (std::size_t i = j; i < f; ++i) v[i - j] = a(i, j);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      reflectors.emplace_back();
      taus.push_back(0.0);
      continue;
    }
    const double alpha = v[0] >= 0.0 ? -norm : norm;
    v[0] -= alpha;
    double vnorm2 = 0.0;
    for (double x : v) vnorm2 += x * x;
    const double tau = vnorm2 == 0.0 ? 0.0 : 2.0 / vnorm2;
    // Apply (I - tau v v^T) to the trailing columns.
    for (std::size_t c = j; c < f; ++c) {
      double dot = 0.0;
      for (std::size_t i = j; i < f; ++i) dot += v[i - j] * a(i, c);
      dot *= tau;
      for (std::size_t i = j; i < f; ++i) a(i, c) -= dot * v[i - j];
    }
    reflectors.push_back(std::move(v));
    taus.push_back(tau);
  }

  // Q = H_0 ... H_{f-1} applied to the identity.
  Matrix q = Matrix::identity(f);
  for (std::size_t jj = f; jj-- > 0;) {
    if (taus[jj] == 0.0 || reflectors[jj].empty()) continue;
    const auto& v = reflectors[jj];
    for (std::size_t c = 0; c < f; ++c) {
      double dot = 0.0;
      for (std::size_t i = jj; i < f; ++i) dot += v[i - jj] * q(i, c);
      dot *= taus[jj];
      for (std::size_t i = jj; i < f; ++i) q(i, c) -= dot * v[i - jj];
    }
  }

  // Sign-normalize: make diag(R) >= 0 so Q is a deterministic function of
  // the draw.
  for (std::size_t j = 0; j < f; ++j) {
    if (a(j, j) < 0.0) {
      for (std::size_t i = 0; i < f; ++i) q(i, j) = -q(i, j);
    }
  }
  return q;
}

/// Eigenvalues of a symmetric matrix, ascending. Householder
/// tridiagonalization followed by implicit-shift QL; eigenvectors are not
/// accumulated.
inline std::vector<double> sym_eigenvalues(const Matrix& input) {
  if (input.rows() != input.cols() || input.rows() < 1) {
    throw DimensionError("sym_eigenvalues: square nonempty matrix required");
  }
  const std::size_t n = input.rows();
  Matrix a = input;
  std::vector<double> d(n, 0.0), e(n, 0.0);

  // Reduce to tridiagonal form.
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t l = i - 1;
    double h = 0.0, scale = 0.0;
    if (l > 0) {
      for (std::size_t k = 0; k <= l; ++k) scale += std::abs(a(i, k));
      if (scale == 0.0) {
        e[i] = a(i, l);
      } else {
        for (std::size_t k = 0; k <= l; ++k) {
          a(i, k) /= scale;
          h += a(i, k) * a(i, k);
        }
        double f = a(i, l);
        const double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        a(i, l) = f - g;
        f = 0.0;
        for (std::size_t j = 0; j <= l; ++j) {
          double gg = 0.0;
          for (std::size_t k = 0; k <= j; ++k) gg += a(j, k) * a(i, k);
          for (std::size_t k = j + 1; k <= l; ++k) gg += a(k, j) * a(i, k);
          e[j] = gg / h;
          f += e[j] * a(i, j);
        }
        const double hh = f / (h + h);
        for (std::size_t j = 0; j <= l; ++j) {
          f = a(i, j);
          const double gg = e[j] - hh * f;
          e[j] = gg;
          for (std::size_t k = 0; k <= j; ++k) a(j, k) -= f * e[k] + gg * a(i, k);
        }
      }
    } else {
      e[i] = a(i, l);
    }
    d[i] = h;
  }
  e[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) d[i] = a(i, i);

  // Implicit-shift QL on the tridiagonal.
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) + dd == dd) break;
      }
      if (m != l) {
        if (iter++ == 50) throw NumericError("sym_eigenvalues: QL iteration did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + detail::sign_transfer(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        bool underflow = false;
        for (std::size_t i = m; i-- > l;) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
        }
        if (underflow) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  std::sort(d.begin(), d.end());
  return d;
}

}  // namespace flake
