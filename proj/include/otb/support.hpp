#pragma once

#include "otb/core.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

namespace otb {

using IndexPair = std::pair<int, int>;  // 0-based (row, col)

// Sparse index set over {0..n-1}^2 in CSR layout, rows and columns sorted.
struct SupportSet {
  int n = 0;
  std::vector<int> row_ptr;  // size n+1
  std::vector<int> cols;     // size |Sigma|
  std::vector<int> sigma;    // diagonal permutation used by totalize, empty otherwise
  bool certified_total = false;

  static SupportSet from_pairs(int n, std::vector<IndexPair> pairs) {
    for (auto [i, j] : pairs)
      if (i < 0 || i >= n || j < 0 || j >= n)
        throw std::invalid_argument("SupportSet: index out of range");
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    SupportSet s;
    s.n = n;
    s.row_ptr.assign(n + 1, 0);
    s.cols.reserve(pairs.size());
    for (auto [i, j] : pairs) {
      ++s.row_ptr[i + 1];
      s.cols.push_back(j);
    }
    for (int i = 0; i < n; ++i) s.row_ptr[i + 1] += s.row_ptr[i];
    return s;
  }

  std::size_t size() const { return cols.size(); }

  bool contains(int i, int j) const {
    const auto b = cols.begin() + row_ptr[i], e = cols.begin() + row_ptr[i + 1];
    return std::binary_search(b, e, j);
  }

  std::vector<IndexPair> pairs() const {
    std::vector<IndexPair> out;
    out.reserve(cols.size());
    for (int i = 0; i < n; ++i)
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out.push_back({i, cols[k]});
    return out;
  }

  bool same_indices(const SupportSet& o) const {
    return n == o.n && row_ptr == o.row_ptr && cols == o.cols;
  }

  Mat mask() const {
    Mat m = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) m(i, cols[k]) = 1.0;
    return m;
  }
};

namespace detail {

// Hopcroft-Karp maximum bipartite matching on a CSR adjacency.
// banned_row/banned_col exclude one vertex on each side (-1: none), used by
// the forced-edge total-support check.
inline int max_matching(int n, const std::vector<int>& row_ptr,
                        const std::vector<int>& cols, std::vector<int>& match_row,
                        int banned_row = -1, int banned_col = -1) {
  std::vector<int> match_col(n, -1);
  match_row.assign(n, -1);
  std::vector<int> dist(n);
  const int INF = n + 1;
  int matching = 0;

  auto bfs = [&]() {
    std::queue<int> q;
    for (int u = 0; u < n; ++u) {
      if (u == banned_row) { dist[u] = INF; continue; }
      if (match_row[u] == -1) { dist[u] = 0; q.push(u); }
      else dist[u] = INF;
    }
    bool found = false;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int k = row_ptr[u]; k < row_ptr[u + 1]; ++k) {
        const int v = cols[k];
        if (v == banned_col) continue;
        const int w = match_col[v];
        if (w == -1) found = true;
        else if (dist[w] == INF) { dist[w] = dist[u] + 1; q.push(w); }
      }
    }
    return found;
  };
  std::function<bool(int)> dfs = [&](int u) -> bool {
    for (int k = row_ptr[u]; k < row_ptr[u + 1]; ++k) {
      const int v = cols[k];
      if (v == banned_col) continue;
      const int w = match_col[v];
      if (w == -1 || (dist[w] == dist[u] + 1 && dfs(w))) {
        match_row[u] = v;
        match_col[v] = u;
        return true;
      }
    }
    dist[u] = INF;
    return false;
  };

  while (bfs())
    for (int u = 0; u < n; ++u)
      if (u != banned_row && match_row[u] == -1 && dfs(u)) ++matching;
  return matching;
}

inline void csr_of_mask(const Mat& mask, std::vector<int>& row_ptr, std::vector<int>& cols) {
  const int n = static_cast<int>(mask.rows());
  row_ptr.assign(n + 1, 0);
  cols.clear();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if (mask(i, j) != 0.0) cols.push_back(j);
    row_ptr[i + 1] = static_cast<int>(cols.size());
  }
}

}  // namespace detail

// A square 0/1 pattern has support iff it contains a positive diagonal,
// i.e. its bipartite graph has a perfect matching.
inline bool has_support(const SupportSet& s) {
  std::vector<int> mr;
  return detail::max_matching(s.n, s.row_ptr, s.cols, mr) == s.n;
}

inline bool has_support(const Mat& mask) {
  if (mask.rows() != mask.cols()) throw std::invalid_argument("has_support: not square");
  std::vector<int> rp, cs, mr;
  detail::csr_of_mask(mask, rp, cs);
  return detail::max_matching(static_cast<int>(mask.rows()), rp, cs, mr) ==
         static_cast<int>(mask.rows());
}

// Total support: every nonzero entry lies on a positive diagonal. Checked by
// forcing each edge (i,j) and asking for a perfect matching on the rest.
inline bool has_total_support_csr(int n, const std::vector<int>& row_ptr,
                                  const std::vector<int>& cols) {
  if (cols.empty()) return false;
  std::vector<int> mr;
  if (detail::max_matching(n, row_ptr, cols, mr) != n) return false;
  for (int i = 0; i < n; ++i)
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      const int j = cols[k];
      if (mr[i] == j) continue;  // already on the found diagonal
      std::vector<int> sub;
      if (detail::max_matching(n, row_ptr, cols, sub, i, j) != n - 1) return false;
    }
  return true;
}

inline bool has_total_support(const SupportSet& s) {
  return has_total_support_csr(s.n, s.row_ptr, s.cols);
}

inline bool has_total_support(const Mat& mask) {
  if (mask.rows() != mask.cols()) throw std::invalid_argument("has_total_support: not square");
  std::vector<int> rp, cs;
  detail::csr_of_mask(mask, rp, cs);
  return has_total_support_csr(static_cast<int>(mask.rows()), rp, cs);
}

// Sigma'' = {(i,j): c_ij - nu1_i - nu2_j < eps}.
inline std::vector<IndexPair> threshold_select(const Mat& cost, const Vec& nu, double eps) {
  const int n = static_cast<int>(cost.rows());
  if (nu.size() != 2 * n) throw std::invalid_argument("threshold_select: nu length");
  std::vector<IndexPair> out;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (cost(i, j) - nu[i] - nu[n + j] < eps) out.push_back({i, j});
  return out;
}

namespace detail {

// k smallest slack entries per row and per column of an implicitly given
// cost; ties broken by lower column index, then lower row index.
template <class CostFn>
std::vector<IndexPair> k_smallest_select_fn(int n, CostFn&& cost, const Vec& nu, int k) {
  if (k <= 0 || k > n) throw std::invalid_argument("k_smallest_select: k out of range");
  std::vector<IndexPair> out;
  out.reserve(static_cast<std::size_t>(2) * k * n);
  std::vector<std::pair<double, int>> buf(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) buf[j] = {cost(i, j) - nu[i] - nu[n + j], j};
    std::nth_element(buf.begin(), buf.begin() + (k - 1), buf.end());
    std::sort(buf.begin(), buf.begin() + k);
    for (int m = 0; m < k; ++m) out.push_back({i, buf[m].second});
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) buf[i] = {cost(i, j) - nu[i] - nu[n + j], i};
    std::nth_element(buf.begin(), buf.begin() + (k - 1), buf.end());
    std::sort(buf.begin(), buf.begin() + k);
    for (int m = 0; m < k; ++m) out.push_back({buf[m].second, j});
  }
  return out;
}

}  // namespace detail

inline std::vector<IndexPair> k_smallest_select(const Mat& cost, const Vec& nu, int k) {
  const int n = static_cast<int>(cost.rows());
  if (nu.size() != 2 * n) throw std::invalid_argument("k_smallest_select: nu length");
  return detail::k_smallest_select_fn(
      n, [&](int i, int j) { return cost(i, j); }, nu, k);
}

// Sigma = Sigma' u Sigma'' u Sigma''' with Sigma' the diagonal of sigma and
// Sigma''' its reflection {(sigma^-1(j), sigma(i))}. The union has total
// support by construction.
inline SupportSet totalize(int n, const std::vector<IndexPair>& sigma_pp,
                           std::vector<int> sigma = {}) {
  if (sigma.empty()) {
    sigma.resize(n);
    std::iota(sigma.begin(), sigma.end(), 0);
  }
  if (static_cast<int>(sigma.size()) != n)
    throw std::invalid_argument("totalize: permutation size mismatch");
  std::vector<int> inv(n, -1);
  for (int i = 0; i < n; ++i) {
    if (sigma[i] < 0 || sigma[i] >= n || inv[sigma[i]] != -1)
      throw std::invalid_argument("totalize: sigma is not a permutation");
    inv[sigma[i]] = i;
  }
  std::vector<IndexPair> pairs = sigma_pp;
  for (int i = 0; i < n; ++i) pairs.push_back({i, sigma[i]});
  for (auto [i, j] : sigma_pp) pairs.push_back({inv[j], sigma[i]});
  SupportSet s = SupportSet::from_pairs(n, std::move(pairs));
  s.sigma = std::move(sigma);
  s.certified_total = true;
  return s;
}

// Greedy heavy diagonal of a dense plan, usable as the sigma of totalize:
// repeatedly pick the largest entry among unused rows/columns.
inline std::vector<int> greedy_diagonal(const Mat& plan) {
  const int n = static_cast<int>(plan.rows());
  std::vector<std::pair<double, IndexPair>> entries;
  entries.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) entries.push_back({plan(i, j), {i, j}});
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> sigma(n, -1);
  std::vector<char> used_col(n, 0);
  int placed = 0;
  for (const auto& [v, ij] : entries) {
    if (placed == n) break;
    auto [i, j] = ij;
    if (sigma[i] == -1 && !used_col[j]) {
      sigma[i] = j;
      used_col[j] = 1;
      ++placed;
    }
  }
  for (int i = 0; i < n; ++i)
    if (sigma[i] == -1)
      for (int j = 0; j < n; ++j)
        if (!used_col[j]) { sigma[i] = j; used_col[j] = 1; break; }
  return sigma;
}

}  // namespace otb
