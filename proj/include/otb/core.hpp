#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace otb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Plans and costs above this side length must be support-restricted.
inline constexpr int kDenseSideLimit = 6000;

// Side length of a vectorized n*n matrix. Throws if the length is not a
// perfect square.
inline int side_of(Eigen::Index len) {
  const int n = static_cast<int>(std::llround(std::sqrt(static_cast<double>(len))));
  if (n <= 0 || static_cast<Eigen::Index>(n) * n != len)
    throw std::invalid_argument("vector length " + std::to_string(len) +
                                " is not a perfect square");
  return n;
}

// Row-major reshape: X(i,j) = x[i*n + j].
inline Mat reshape(const Vec& x) {
  const int n = side_of(x.size());
  Mat X(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) X(i, j) = x[static_cast<Eigen::Index>(i) * n + j];
  return X;
}

inline Vec unreshape(const Mat& X) {
  if (X.rows() != X.cols()) throw std::invalid_argument("unreshape: matrix not square");
  const int n = static_cast<int>(X.rows());
  Vec x(static_cast<Eigen::Index>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) x[static_cast<Eigen::Index>(i) * n + j] = X(i, j);
  return x;
}

// M x = [row sums of X; column sums of X] for X the reshaped x.
inline Vec apply_marginal(const Vec& x, int n) {
  if (x.size() != static_cast<Eigen::Index>(n) * n)
    throw std::invalid_argument("apply_marginal: length mismatch");
  Vec out = Vec::Zero(2 * n);
  for (int i = 0; i < n; ++i) {
    const double* row = x.data() + static_cast<Eigen::Index>(i) * n;
    double rs = 0;
    for (int j = 0; j < n; ++j) {
      rs += row[j];
      out[n + j] += row[j];
    }
    out[i] = rs;
  }
  return out;
}

// Adjoint: reshape(M' nu) = nu1 * 1' + 1 * nu2'.
inline Vec apply_adjoint(const Vec& nu) {
  if (nu.size() % 2 != 0) throw std::invalid_argument("apply_adjoint: odd length");
  const int n = static_cast<int>(nu.size() / 2);
  Vec out(static_cast<Eigen::Index>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<Eigen::Index>(i) * n + j] = nu[i] + nu[n + j];
  return out;
}

// (M diag(weights) M' + eps_reg I) y, block-wise without forming M.
// With W the reshaped weights:
//   out1 = y1 .* (W 1) + W y2
//   out2 = y2 .* (W' 1) + W' y1
inline Vec schur_apply(const Vec& weights, const Vec& y, double eps_reg = 0.0) {
  const int n = side_of(weights.size());
  if (y.size() != 2 * n) throw std::invalid_argument("schur_apply: rhs length mismatch");
  if ((weights.array() < 0).any())
    throw std::invalid_argument("schur_apply: negative weight");
  Vec out(2 * n);
  Vec wy2 = Vec::Zero(n);     // W y2 and row sums
  Vec wty1 = Vec::Zero(n);    // W' y1 and column sums
  Vec rsum = Vec::Zero(n), csum = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double* row = weights.data() + static_cast<Eigen::Index>(i) * n;
    double rs = 0, acc = 0;
    const double y1i = y[i];
    for (int j = 0; j < n; ++j) {
      const double w = row[j];
      rs += w;
      acc += w * y[n + j];
      csum[j] += w;
      wty1[j] += w * y1i;
    }
    rsum[i] = rs;
    wy2[i] = acc;
  }
  for (int i = 0; i < n; ++i) out[i] = y[i] * rsum[i] + wy2[i] + eps_reg * y[i];
  for (int j = 0; j < n; ++j) out[n + j] = y[n + j] * csum[j] + wty1[j] + eps_reg * y[n + j];
  return out;
}

// Dense 2n x n^2 marginal operator, for small-n diagnostics and tests.
inline Mat dense_marginal_matrix(int n) {
  Mat M = Mat::Zero(2 * n, static_cast<Eigen::Index>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      M(i, static_cast<Eigen::Index>(i) * n + j) = 1.0;
      M(n + j, static_cast<Eigen::Index>(i) * n + j) = 1.0;
    }
  return M;
}

// Squared-distance assignment costs between two equal-size point clouds
// (rows are points).
inline Mat l2_cost(const Mat& Y, const Mat& Z) {
  if (Y.rows() != Z.rows() || Y.cols() != Z.cols())
    throw std::invalid_argument("l2_cost: point clouds must have equal shape");
  const int n = static_cast<int>(Y.rows());
  if (n > kDenseSideLimit)
    throw std::invalid_argument("l2_cost: side exceeds dense storage limit");
  Mat C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = (Y.row(i) - Z.row(j)).squaredNorm();
  return C;
}

}  // namespace otb
