#pragma once

#include "otb/core.hpp"
#include "otb/support.hpp"

#include <optional>
#include <stdexcept>

namespace otb {

// Nonnegative coupling, dense (values has n^2 row-major entries) or
// restricted to a support set (values aligned with the CSR entry order).
struct TransportPlan {
  int n = 0;
  std::optional<SupportSet> support;
  Vec values;
  Vec row_marginals, col_marginals;

  static TransportPlan dense(int n, Vec vals) {
    if (vals.size() != static_cast<Eigen::Index>(n) * n)
      throw std::invalid_argument("TransportPlan: dense size mismatch");
    TransportPlan p;
    p.n = n;
    p.values = std::move(vals);
    p.refresh_marginals();
    return p;
  }

  static TransportPlan sparse(SupportSet sup, Vec vals) {
    if (vals.size() != static_cast<Eigen::Index>(sup.size()))
      throw std::invalid_argument("TransportPlan: sparse size mismatch");
    TransportPlan p;
    p.n = sup.n;
    p.support = std::move(sup);
    p.values = std::move(vals);
    p.refresh_marginals();
    return p;
  }

  static TransportPlan uniform(int n) {
    return dense(n, Vec::Constant(static_cast<Eigen::Index>(n) * n, 1.0 / n));
  }

  static TransportPlan permutation(int n, const std::vector<int>& perm) {
    Vec v = Vec::Zero(static_cast<Eigen::Index>(n) * n);
    for (int i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i) * n + perm[i]] = 1.0;
    return dense(n, std::move(v));
  }

  void refresh_marginals() {
    row_marginals = Vec::Zero(n);
    col_marginals = Vec::Zero(n);
    if (!support) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double v = values[static_cast<Eigen::Index>(i) * n + j];
          row_marginals[i] += v;
          col_marginals[j] += v;
        }
    } else {
      for (int i = 0; i < n; ++i)
        for (int k = support->row_ptr[i]; k < support->row_ptr[i + 1]; ++k) {
          row_marginals[i] += values[k];
          col_marginals[support->cols[k]] += values[k];
        }
    }
  }

  double entry(int i, int j) const {
    if (!support) return values[static_cast<Eigen::Index>(i) * n + j];
    const auto b = support->cols.begin() + support->row_ptr[i];
    const auto e = support->cols.begin() + support->row_ptr[i + 1];
    const auto it = std::lower_bound(b, e, j);
    if (it == e || *it != j) return 0.0;
    return values[it - support->cols.begin()];
  }

  // <c, x>
  double dot_cost(const Mat& cost) const {
    double acc = 0;
    if (!support) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          acc += cost(i, j) * values[static_cast<Eigen::Index>(i) * n + j];
    } else {
      for (int i = 0; i < n; ++i)
        for (int k = support->row_ptr[i]; k < support->row_ptr[i + 1]; ++k)
          acc += cost(i, support->cols[k]) * values[k];
    }
    return acc;
  }

  // l1 marginal infeasibility ||Mx - 1||_1
  double infeasibility() const {
    return (row_marginals.array() - 1.0).abs().sum() +
           (col_marginals.array() - 1.0).abs().sum();
  }

  Mat to_dense_matrix() const {
    Mat X = Mat::Zero(n, n);
    if (!support) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) X(i, j) = values[static_cast<Eigen::Index>(i) * n + j];
    } else {
      for (int i = 0; i < n; ++i)
        for (int k = support->row_ptr[i]; k < support->row_ptr[i + 1]; ++k)
          X(i, support->cols[k]) = values[k];
    }
    return X;
  }

  std::size_t active_size() const { return support ? support->size() : static_cast<std::size_t>(n) * n; }
};

// Balancing error of eq-style metric: ||X 1 - 1||_1 + ||X' 1 - 1||_1.
inline double balance_error(const TransportPlan& plan) {
  return plan.infeasibility();
}

}  // namespace otb
