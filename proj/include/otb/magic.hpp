#pragma once

#include "otb/core.hpp"

#include <stdexcept>
#include <utility>

namespace otb {

// Magic square with the reference layouts: Siamese rule for odd orders,
// complement pattern for doubly even orders, and the LUX-style block
// construction for singly even orders. Entries are the integers 1..n^2 and
// every row, column, and both main diagonals sum to n(n^2+1)/2.
inline Mat magic_square(int n) {
  if (n < 3) throw std::invalid_argument("magic_square: n must be >= 3");
  Mat M(n, n);
  if (n % 2 == 1) {
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j) {
        const int a = ((i + j - (n + 3) / 2) % n + n) % n;
        const int b = (i + 2 * j - 2) % n;
        M(i - 1, j - 1) = n * a + b + 1;
      }
    return M;
  }
  if (n % 4 == 0) {
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j) {
        const double v = static_cast<double>(i - 1) * n + j;
        const bool flip = ((i % 4) / 2) == ((j % 4) / 2);
        M(i - 1, j - 1) = flip ? n * static_cast<double>(n) + 1 - v : v;
      }
    return M;
  }
  // Singly even: assemble from the odd-order square of half size, then swap
  // the prescribed column segments and the two middle-row cells.
  const int p = n / 2;
  const Mat A = magic_square(p);
  const double p2 = static_cast<double>(p) * p;
  M.topLeftCorner(p, p) = A;
  M.topRightCorner(p, p) = A.array() + 2 * p2;
  M.bottomLeftCorner(p, p) = A.array() + 3 * p2;
  M.bottomRightCorner(p, p) = A.array() + p2;
  const int k = (n - 2) / 4;
  auto swap_halves = [&](int j) {
    for (int i = 0; i < p; ++i) std::swap(M(i, j), M(i + p, j));
  };
  for (int j = 0; j < k; ++j) swap_halves(j);
  for (int j = n - k + 1; j < n; ++j) swap_halves(j);
  std::swap(M(k, 0), M(k + p, 0));
  std::swap(M(k, k), M(k + p, k));
  return M;
}

}  // namespace otb
