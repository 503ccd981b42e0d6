#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "flake/error.hpp"
#include "flake/gram.hpp"
#include "flake/matrix.hpp"
#include "flake/rng.hpp"

namespace flake {

/// Solver knobs. The observer, when set, receives the dual objective
/// (maximization form) after every pair update; used by property tests.
struct SmoOptions {
  double tol = 1e-3;
  std::size_t max_passes = 1'000'000;
  std::function<void(double)> objective_observer;
};

/// Binary kernel SVM fit on a precomputed kernel matrix. Training labels
/// are retained because the decision sum needs them.
struct TrainedModel {
  std::vector<double> alphas;                // dual coefficients, 0 <= a_i <= C
  std::vector<int> labels;                   // +-1 per training sample
  double bias = 0.0;                         // decision f(x) = sum a_i y_i k(x, x_i) + bias
  std::vector<std::size_t> support_indices;  // indices with a_i > 0
  double c_param = 0.0;
  KernelSpec kernel;
  std::vector<int> class_labels;  // ordered label set of the problem
};

/// Sequential minimal optimization on the dual:
///   minimize 1/2 a^T Q a - e^T a,  Q_ij = y_i y_j K_ij,
///   subject to 0 <= a_i <= C and sum y_i a_i = 0.
/// Pair selection is the maximal-KKT-violating pair; scans resolve ties by
/// lowest index, so the solve is deterministic. Terminates when the largest
/// violation drops to `tol`.
inline TrainedModel train(const Matrix& kernel_matrix, const std::vector<int>& labels, double c_param,
                          const SmoOptions& options = {}) {
  const std::size_t n = kernel_matrix.rows();
  if (kernel_matrix.cols() != n) throw DimensionError("train: kernel matrix must be square");
  if (labels.size() != n) throw DimensionError("train: label count does not match kernel size");
  if (c_param <= 0.0) throw ValidationError("train: C must be positive");
  bool has_pos = false, has_neg = false;
  for (int y : labels) {
    if (y == 1) {
      has_pos = true;
    } else if (y == -1) {
      has_neg = true;
    } else {
      throw ValidationError("train: labels must be +1 or -1");
    }
  }
  if (!has_pos || !has_neg) throw ValidationError("train: both classes required");

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);  // gradient of the minimization form at a = 0
  const auto y = [&](std::size_t i) { return static_cast<double>(labels[i]); };
  const auto q = [&](std::size_t i, std::size_t j) { return y(i) * y(j) * kernel_matrix(i, j); };

  const double inf = std::numeric_limits<double>::infinity();
  std::size_t passes = 0;
  while (true) {
    // Maximal violating pair over I_up / I_low.
    double up_max = -inf, low_min = inf;
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const bool in_up = (y(t) > 0 && alpha[t] < c_param) || (y(t) < 0 && alpha[t] > 0.0);
      const bool in_low = (y(t) < 0 && alpha[t] < c_param) || (y(t) > 0 && alpha[t] > 0.0);
      const double v = -y(t) * grad[t];
      if (in_up && v > up_max) {
        up_max = v;
        i = t;
      }
      if (in_low && v < low_min) {
        low_min = v;
        j = t;
      }
    }
    if (i == n || j == n || up_max - low_min <= options.tol) break;
    if (++passes > options.max_passes) {
      throw NumericError("train: SMO exceeded " + std::to_string(options.max_passes) + " pair updates");
    }

    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    constexpr double kTau = 1e-12;
    if (labels[i] != labels[j]) {
      double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else {
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = -diff;
        }
      }
      if (diff > 0.0) {
        if (alpha[i] > c_param) {
          alpha[i] = c_param;
          alpha[j] = c_param - diff;
        }
      } else {
        if (alpha[j] > c_param) {
          alpha[j] = c_param;
          alpha[i] = c_param + diff;
        }
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c_param) {
        if (alpha[i] > c_param) {
          alpha[i] = c_param;
          alpha[j] = sum - c_param;
        }
        if (alpha[j] > c_param) {
          alpha[j] = c_param;
          alpha[i] = sum - c_param;
        }
      } else {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = sum;
        }
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = sum;
        }
      }
    }

    const double di = alpha[i] - old_ai;
    const double dj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;

    if (options.objective_observer) {
      // W(a) = e^T a - 1/2 a^T Q a, folded through the maintained gradient.
      double sum_a = 0.0, sum_ag = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        sum_a += alpha[t];
        sum_ag += alpha[t] * grad[t];
      }
      options.objective_observer(0.5 * (sum_a - sum_ag));
    }
  }

  // Bias from the KKT conditions: average -y_i grad_i over free samples,
  // midpoint of the feasible interval when none are free.
  double ub = inf, lb = -inf, free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = -y(t) * grad[t];
    if (alpha[t] <= 0.0) {
      if (y(t) > 0) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else if (alpha[t] >= c_param) {
      if (y(t) < 0) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else {
      free_sum += yg;
      ++free_count;
    }
  }

  TrainedModel model;
  model.alphas = std::move(alpha);
  model.labels = labels;
  model.bias = free_count > 0 ? free_sum / static_cast<double>(free_count) : 0.5 * (ub + lb);
  model.c_param = c_param;
  model.class_labels = {-1, 1};
  for (std::size_t t = 0; t < n; ++t) {
    if (model.alphas[t] > 0.0) model.support_indices.push_back(t);
  }
  return model;
}

/// Decision scores for rows of kernel values against the training set:
/// score_r = sum_i a_i y_i kernel_rows(r, i) + bias.
inline std::vector<double> predict(const TrainedModel& model, const Matrix& kernel_rows) {
  if (kernel_rows.cols() != model.alphas.size()) {
    throw DimensionError("predict: kernel rows have " + std::to_string(kernel_rows.cols()) +
                         " columns, model has " + std::to_string(model.alphas.size()) + " samples");
  }
  std::vector<double> scores(kernel_rows.rows(), model.bias);
  for (std::size_t r = 0; r < kernel_rows.rows(); ++r) {
    double acc = 0.0;
    for (const std::size_t i : model.support_indices) {
      acc += model.alphas[i] * static_cast<double>(model.labels[i]) * kernel_rows(r, i);
    }
    scores[r] += acc;
  }
  return scores;
}

enum class Averaging { macro, micro };

/// Binary ROC AUC via the rank statistic with midrank tie handling.
inline double roc_auc(const std::vector<double>& scores, const std::vector<bool>& is_positive) {
  if (scores.size() != is_positive.size()) throw DimensionError("roc_auc: size mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (bool p : is_positive) n_pos += p ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("roc_auc: need at least one positive and one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks: tied scores share the average of their 1-based rank range.
  std::vector<double> rank(n, 0.0);
  std::size_t pos = 0;
  while (pos < n) {
    std::size_t end = pos;
    while (end + 1 < n && scores[order[end + 1]] == scores[order[pos]]) ++end;
    const double mid = 0.5 * (static_cast<double>(pos + 1) + static_cast<double>(end + 1));
    for (std::size_t t = pos; t <= end; ++t) rank[order[t]] = mid;
    pos = end + 1;
  }

  double pos_rank_sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (is_positive[t]) pos_rank_sum += rank[t];
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// Convenience wrapper for +-1 labels.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels_pm1) {
  std::vector<bool> is_positive(labels_pm1.size());
  for (std::size_t i = 0; i < labels_pm1.size(); ++i) is_positive[i] = labels_pm1[i] > 0;
  return roc_auc(scores, is_positive);
}

/// One-vs-rest multiclass AUC. class_scores column c holds the scores of
/// the model for class_order[c]. Macro averages the per-class AUCs; micro
/// pools every (score, is-class) pair into one binary problem.
inline double roc_auc(const Matrix& class_scores, const std::vector<int>& labels,
                      const std::vector<int>& class_order, Averaging averaging) {
  if (class_scores.rows() != labels.size() || class_scores.cols() != class_order.size()) {
    throw DimensionError("roc_auc: score matrix shape does not match labels/classes");
  }
  if (averaging == Averaging::macro) {
    double sum = 0.0;
    for (std::size_t c = 0; c < class_order.size(); ++c) {
      std::vector<double> scores(labels.size());
      std::vector<bool> is_positive(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        scores[i] = class_scores(i, c);
        is_positive[i] = labels[i] == class_order[c];
      }
      sum += roc_auc(scores, is_positive);
    }
    return sum / static_cast<double>(class_order.size());
  }
  std::vector<double> pooled_scores;
  std::vector<bool> pooled_positive;
  pooled_scores.reserve(labels.size() * class_order.size());
  pooled_positive.reserve(labels.size() * class_order.size());
  for (std::size_t c = 0; c < class_order.size(); ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      pooled_scores.push_back(class_scores(i, c));
      pooled_positive.push_back(labels[i] == class_order[c]);
    }
  }
  return roc_auc(pooled_scores, pooled_positive);
}

/// Sorted distinct labels.
inline std::vector<int> class_set(const std::vector<int>& labels) {
  std::vector<int> classes = labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return classes;
}

/// Seeded stratified split: indices of each class are shuffled and dealt
/// round-robin, so every fold sees each class in near-equal proportion.
/// Returns per-fold test index lists (ascending within a fold).
inline std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& labels,
                                                              std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ValidationError("stratified_folds: need at least 2 folds");
  std::vector<std::vector<std::size_t>> folds(n_folds);
  for (const int cls : class_set(labels)) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    if (members.size() < n_folds) {
      throw ValidationError("stratified_folds: class " + std::to_string(cls) + " has " +
                            std::to_string(members.size()) + " members, need >= " +
                            std::to_string(n_folds));
    }
    CounterRng rng(seed, static_cast<std::uint64_t>(cls) * 2654435761u + 1);
    for (std::size_t i = members.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
      std::swap(members[i - 1], members[j]);
    }
    for (std::size_t i = 0; i < members.size(); ++i) folds[i % n_folds].push_back(members[i]);
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

/// Cross-validation result for the winning grid point.
struct CvReport {
  double best_c = 0.0;
  int best_p = 0;
  std::vector<double> fold_aucs;
  double mean_auc = 0.0;
  double std_auc = 0.0;

  bool operator==(const CvReport&) const = default;
};

struct CvOptions {
  std::size_t folds = 5;
  std::uint64_t shuffle_seed = 1;
  Averaging averaging = Averaging::macro;
  double poly_offset = 1.0;  // v in (g + v)^p
  SmoOptions smo;
};

/// C grid 2^-4 .. 2^10 (15 values).
inline std::vector<double> default_c_grid() {
  std::vector<double> grid;
  for (int e = -4; e <= 10; ++e) grid.push_back(std::ldexp(1.0, e));
  return grid;
}

/// Degree grid 1 .. 5.
inline std::vector<int> default_degree_grid() { return {1, 2, 3, 4, 5}; }

namespace detail {

inline Matrix submatrix(const Matrix& m, const std::vector<std::size_t>& rows,
                        const std::vector<std::size_t>& cols) {
  Matrix out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

// Per-fold AUC for one (kernel, C) pair: binary problems train one model on
// the larger label as positive; multiclass trains one-vs-rest per class.
inline double fold_auc(const Matrix& kernel_tt, const Matrix& kernel_et,
                       const std::vector<int>& train_labels, const std::vector<int>& test_labels,
                       const std::vector<int>& classes, double c, const CvOptions& opts) {
  if (classes.size() == 2) {
    std::vector<int> y(train_labels.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = train_labels[i] == classes[1] ? 1 : -1;
    const TrainedModel model = train(kernel_tt, y, c, opts.smo);
    const std::vector<double> scores = predict(model, kernel_et);
    std::vector<bool> is_positive(test_labels.size());
    for (std::size_t i = 0; i < test_labels.size(); ++i) is_positive[i] = test_labels[i] == classes[1];
    return roc_auc(scores, is_positive);
  }
  Matrix class_scores(test_labels.size(), classes.size());
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    std::vector<int> y(train_labels.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = train_labels[i] == classes[ci] ? 1 : -1;
    const TrainedModel model = train(kernel_tt, y, c, opts.smo);
    const std::vector<double> scores = predict(model, kernel_et);
    for (std::size_t i = 0; i < scores.size(); ++i) class_scores(i, ci) = scores[i];
  }
  return roc_auc(class_scores, test_labels, classes, opts.averaging);
}

}  // namespace detail

/// Grid search over (C, degree) with stratified k-fold cross-validation on
/// a precomputed Gram matrix. Polynomial kernels are built per degree and
/// shared across C values and folds. The argmax is by mean AUC; exact ties
/// go to the smaller C, then the smaller degree.
///
/// Each degree's kernel is rescaled to unit maximum diagonal before the
/// solve. Scores are invariant under joint kernel/C rescaling, but without
/// this the solver's absolute KKT tolerance is meaningless for high-degree
/// kernels on unnormalized data, where entries reach (max_i g_ii + v)^p.
inline CvReport cross_validate_grid(const Matrix& gram_values, const std::vector<int>& labels,
                                    const std::vector<double>& c_grid, const std::vector<int>& degree_grid,
                                    const CvOptions& opts = {}) {
  if (gram_values.rows() != gram_values.cols()) throw DimensionError("cross_validate_grid: square gram required");
  if (labels.size() != gram_values.rows()) throw DimensionError("cross_validate_grid: label count mismatch");
  if (c_grid.empty() || degree_grid.empty()) throw ValidationError("cross_validate_grid: empty grid");
  const std::vector<int> classes = class_set(labels);
  if (classes.size() < 2) throw ValidationError("cross_validate_grid: need at least two classes");

  const auto folds = stratified_folds(labels, opts.folds, opts.shuffle_seed);
  std::vector<std::size_t> all(gram_values.rows());
  std::iota(all.begin(), all.end(), 0);

  CvReport best;
  bool have_best = false;
  for (const int p : degree_grid) {
    Matrix kernel = poly_kernel(gram_values, opts.poly_offset, p);
    double diag_max = 0.0;
    for (std::size_t i = 0; i < kernel.rows(); ++i) diag_max = std::max(diag_max, std::abs(kernel(i, i)));
    if (diag_max > 0.0) kernel *= 1.0 / diag_max;
    // Extract fold kernels once per degree; they are identical across C.
    std::vector<Matrix> fold_tt(folds.size()), fold_et(folds.size());
    std::vector<std::vector<int>> fold_train_labels(folds.size()), fold_test_labels(folds.size());
    for (std::size_t fi = 0; fi < folds.size(); ++fi) {
      std::vector<std::size_t> train_idx;
      train_idx.reserve(all.size() - folds[fi].size());
      std::set_difference(all.begin(), all.end(), folds[fi].begin(), folds[fi].end(),
                          std::back_inserter(train_idx));
      fold_tt[fi] = detail::submatrix(kernel, train_idx, train_idx);
      fold_et[fi] = detail::submatrix(kernel, folds[fi], train_idx);
      for (const std::size_t i : train_idx) fold_train_labels[fi].push_back(labels[i]);
      for (const std::size_t i : folds[fi]) fold_test_labels[fi].push_back(labels[i]);
    }

    for (const double c : c_grid) {
      std::vector<double> aucs(folds.size());
      for (std::size_t fi = 0; fi < folds.size(); ++fi) {
        aucs[fi] = detail::fold_auc(fold_tt[fi], fold_et[fi], fold_train_labels[fi],
                                    fold_test_labels[fi], classes, c, opts);
      }
      const double mean = std::accumulate(aucs.begin(), aucs.end(), 0.0) / aucs.size();
      const bool better =
          !have_best || mean > best.mean_auc ||
          (mean == best.mean_auc && (c < best.best_c || (c == best.best_c && p < best.best_p)));
      if (better) {
        double var = 0.0;
        for (const double a : aucs) var += (a - mean) * (a - mean);
        best.best_c = c;
        best.best_p = p;
        best.fold_aucs = aucs;
        best.mean_auc = mean;
        best.std_auc = std::sqrt(var / aucs.size());
        have_best = true;
      }
    }
  }
  return best;
}

inline CvReport cross_validate_grid(const GramMatrix& gram, const std::vector<int>& labels,
                                    const std::vector<double>& c_grid, const std::vector<int>& degree_grid,
                                    const CvOptions& opts = {}) {
  return cross_validate_grid(gram.values(), labels, c_grid, degree_grid, opts);
}

}  // namespace flake
