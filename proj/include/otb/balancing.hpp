#pragma once

#include "otb/cg.hpp"
#include "otb/core.hpp"
#include "otb/plan.hpp"
#include "otb/support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace otb {

enum class BalanceMethod { SK, KR, NE, LB };

inline const char* to_string(BalanceMethod m) {
  switch (m) {
    case BalanceMethod::SK: return "sk";
    case BalanceMethod::KR: return "kr";
    case BalanceMethod::NE: return "ne";
    case BalanceMethod::LB: return "lb";
  }
  return "?";
}

inline BalanceMethod balance_method_from(const std::string& s) {
  if (s == "sk") return BalanceMethod::SK;
  if (s == "kr") return BalanceMethod::KR;
  if (s == "ne") return BalanceMethod::NE;
  if (s == "lb") return BalanceMethod::LB;
  throw std::invalid_argument("unknown balancing method: " + s);
}

// Geometric t-sequence t0, t0*eta, ... capped by t_max.
struct PathSchedule {
  double t0 = 1.0;
  double eta = 1.5;
  double t_max = 1e6;

  std::vector<double> points() const {
    if (t0 <= 0 || eta <= 1.0 || t_max < t0)
      throw std::invalid_argument("PathSchedule: need t0 > 0, eta > 1, t_max >= t0");
    std::vector<double> ts;
    for (double t = t0; t <= t_max * (1 + 1e-12); t *= eta) ts.push_back(t);
    return ts;
  }
};

struct BalanceConfig {
  double tol = 1e-8;        // l1 balancing error target (eps_MB)
  int max_iter = 0;         // 0: 300 Newton iterations / 500000 SK sweeps
  double step_init = 1.0;   // backtracking line search
  double step_shrink = 0.5;
  double step_c1 = 1e-4;
  CgConfig cg;              // cg.tol == 0: inexact-Newton forcing min(0.1, ||grad||)
  bool record_trace = true;
  // Prime a degenerate cold start (near-zero kernel mass) with one
  // log-domain Sinkhorn sweep before Newton iterations begin.
  bool cold_prime = true;
};

struct BalanceIterRow {
  int iter = 0;
  double error = 0;
  double objective = 0;
  double newton_decrement = 0;  // squared; 0 for SK
  double seconds = 0;
};

struct BalanceReport {
  double error = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::vector<double> newton_decrements;
  bool converged = false;
  double geometric_mean_norm = 0;        // ||zeta1||^1/2 ||zeta2||^1/2, may overflow to inf
  double log10_geometric_mean_norm = 0;  // always finite
  double objective = 0;
  std::vector<BalanceIterRow> trace;
};

// Log-domain balancer state. The scaling vectors are zeta = exp(t * nu); all
// algorithms operate on w = t * nu and never materialize zeta.
struct BalancerState {
  int n = 0;
  double t = 1.0;
  Vec nu;  // 2n
  std::optional<SupportSet> support;

  static BalancerState init(int n, double t = 1.0, std::optional<SupportSet> sup = {}) {
    if ((!sup || sup->size() == 0) && n > kDenseSideLimit)
      throw std::invalid_argument("BalancerState: dense side exceeds limit");
    BalancerState s;
    s.n = n;
    s.t = t;
    s.nu = Vec::Zero(2 * n);
    s.support = std::move(sup);
    return s;
  }

  // Shift nu so <1, nu1> = <1, nu2>; removes the s*[1;-1] null direction.
  void gauge_fix() {
    const double s = (nu.tail(n).sum() - nu.head(n).sum()) / (2.0 * n);
    nu.head(n).array() += s;
    nu.tail(n).array() -= s;
  }
};

namespace detail {

inline void gauge_fix_w(Vec& w, int n) {
  const double s = (w.tail(n).sum() - w.head(n).sum()) / (2.0 * n);
  w.head(n).array() += s;
  w.tail(n).array() -= s;
}

// log ||exp(v)||_2 computed with a max shift.
inline double log_two_norm_exp(const Eigen::Ref<const Vec>& v) {
  const double m = v.maxCoeff();
  double acc = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(2.0 * (v[i] - m));
  return m + 0.5 * std::log(acc);
}

inline void fill_norms(const Vec& w, int n, BalanceReport& rep) {
  const double lg = 0.5 * (log_two_norm_exp(w.head(n)) + log_two_norm_exp(w.tail(n)));
  rep.log10_geometric_mean_norm = lg / std::log(10.0);
  rep.geometric_mean_norm = lg < 700.0 ? std::exp(lg) : std::numeric_limits<double>::infinity();
}

// Dense log-domain kernel: B(w)(i,j) = exp(-t c_ij + w_i + w_{n+j}).
class DenseLogKernel {
 public:
  DenseLogKernel(const Mat& cost, double t) : C_(&cost), t_(t), n_(static_cast<int>(cost.rows())) {
    if (cost.rows() != cost.cols()) throw std::invalid_argument("balancing: cost not square");
    if (n_ > kDenseSideLimit) throw std::invalid_argument("balancing: dense side exceeds limit");
  }

  int n() const { return n_; }
  std::size_t active_size() const { return static_cast<std::size_t>(n_) * n_; }

  // Per-row log-sum-exp of -t c + w2 (the row update quantity; row sum of B is
  // exp(w1_i + row_lse_i)). Column-sweep passes keep the accesses contiguous.
  void row_lse(const Vec& w, Vec& out) const {
    Vec m = Vec::Constant(n_, -std::numeric_limits<double>::infinity());
    for (int j = 0; j < n_; ++j) {
      const double wj = w[n_ + j];
      const double* col = C_->col(j).data();
      for (int i = 0; i < n_; ++i) m[i] = std::max(m[i], -t_ * col[i] + wj);
    }
    Vec acc = Vec::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      const double wj = w[n_ + j];
      const double* col = C_->col(j).data();
      for (int i = 0; i < n_; ++i) acc[i] += std::exp(-t_ * col[i] + wj - m[i]);
    }
    out = m + acc.array().log().matrix();
  }

  void col_lse(const Vec& w, Vec& out) const {
    out.resize(n_);
    for (int j = 0; j < n_; ++j) {
      const double* col = C_->col(j).data();
      double m = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < n_; ++i) m = std::max(m, -t_ * col[i] + w[i]);
      double acc = 0;
      for (int i = 0; i < n_; ++i) acc += std::exp(-t_ * col[i] + w[i] - m);
      out[j] = m + std::log(acc);
    }
  }

  // Materialize B and its margins at w. Throws on overflow.
  void materialize(const Vec& w) {
    B_.resize(n_, n_);
    r_ = Vec::Zero(n_);
    c_ = Vec::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      const double wj = w[n_ + j];
      const double* col = C_->col(j).data();
      double* bcol = B_.col(j).data();
      double cs = 0;
      for (int i = 0; i < n_; ++i) {
        const double b = std::exp(-t_ * col[i] + w[i] + wj);
        bcol[i] = b;
        cs += b;
        r_[i] += b;
      }
      c_[j] = cs;
    }
    if (!r_.allFinite() || !c_.allFinite())
      throw std::runtime_error("balancing: overflow in scaled matrix");
  }

  const Vec& row_sums() const { return r_; }
  const Vec& col_sums() const { return c_; }
  double mass_cached() const { return r_.sum(); }

  // Sum of entries of B(w) minus sum of w (the balancing objective); +inf on
  // overflow so a line search can reject the trial point.
  double objective(const Vec& w) const {
    double acc = 0;
    for (int j = 0; j < n_; ++j) {
      const double wj = w[n_ + j];
      const double* col = C_->col(j).data();
      for (int i = 0; i < n_; ++i) acc += std::exp(-t_ * col[i] + w[i] + wj);
      if (!std::isfinite(acc)) return std::numeric_limits<double>::infinity();
    }
    return acc - w.sum();
  }

  // H y with H = [[diag(r), B], [B', diag(c)]] from the materialized state.
  // One fused pass over B serves both off-diagonal blocks.
  Vec apply_hessian(const Vec& y) const {
    Vec out(2 * n_);
    out.head(n_) = r_.cwiseProduct(y.head(n_));
    out.tail(n_) = c_.cwiseProduct(y.tail(n_));
    const auto y1 = y.head(n_);
    for (int j = 0; j < n_; ++j) {
      const auto bj = B_.col(j);
      out.head(n_) += y[n_ + j] * bj;
      out[n_ + j] += bj.dot(y1);
    }
    return out;
  }

  bool masked() const { return false; }

 private:
  const Mat* C_;
  double t_;
  int n_;
  Mat B_;
  Vec r_, c_;
};

// Support-restricted kernel over CSR entries with per-entry costs.
class SparseLogKernel {
 public:
  SparseLogKernel(const SupportSet& sup, const Vec& cvals, double t)
      : sup_(&sup), cv_(&cvals), t_(t), n_(sup.n) {
    if (cvals.size() != static_cast<Eigen::Index>(sup.size()))
      throw std::invalid_argument("balancing: support cost values size mismatch");
    // column-major view: positions of CSR entries grouped by column
    col_ptr_.assign(n_ + 1, 0);
    for (int c : sup.cols) ++col_ptr_[c + 1];
    for (int j = 0; j < n_; ++j) col_ptr_[j + 1] += col_ptr_[j];
    col_pos_.resize(sup.size());
    col_row_.resize(sup.size());
    std::vector<int> cur(col_ptr_.begin(), col_ptr_.end() - 1);
    for (int i = 0; i < n_; ++i)
      for (int k = sup.row_ptr[i]; k < sup.row_ptr[i + 1]; ++k) {
        const int j = sup.cols[k];
        col_pos_[cur[j]] = k;
        col_row_[cur[j]] = i;
        ++cur[j];
      }
  }

  int n() const { return n_; }
  std::size_t active_size() const { return sup_->size(); }
  const SupportSet& support() const { return *sup_; }

  void row_lse(const Vec& w, Vec& out) const {
    out.resize(n_);
    for (int i = 0; i < n_; ++i) {
      const int b = sup_->row_ptr[i], e = sup_->row_ptr[i + 1];
      if (b == e) throw std::invalid_argument("balancing: empty row under support mask");
      double m = -std::numeric_limits<double>::infinity();
      for (int k = b; k < e; ++k) m = std::max(m, -t_ * (*cv_)[k] + w[n_ + sup_->cols[k]]);
      double acc = 0;
      for (int k = b; k < e; ++k) acc += std::exp(-t_ * (*cv_)[k] + w[n_ + sup_->cols[k]] - m);
      out[i] = m + std::log(acc);
    }
  }

  void col_lse(const Vec& w, Vec& out) const {
    out.resize(n_);
    for (int j = 0; j < n_; ++j) {
      const int b = col_ptr_[j], e = col_ptr_[j + 1];
      if (b == e) throw std::invalid_argument("balancing: empty column under support mask");
      double m = -std::numeric_limits<double>::infinity();
      for (int k = b; k < e; ++k) m = std::max(m, -t_ * (*cv_)[col_pos_[k]] + w[col_row_[k]]);
      double acc = 0;
      for (int k = b; k < e; ++k)
        acc += std::exp(-t_ * (*cv_)[col_pos_[k]] + w[col_row_[k]] - m);
      out[j] = m + std::log(acc);
    }
  }

  void materialize(const Vec& w) {
    vals_.resize(static_cast<Eigen::Index>(sup_->size()));
    r_ = Vec::Zero(n_);
    c_ = Vec::Zero(n_);
    for (int i = 0; i < n_; ++i)
      for (int k = sup_->row_ptr[i]; k < sup_->row_ptr[i + 1]; ++k) {
        const double b = std::exp(-t_ * (*cv_)[k] + w[i] + w[n_ + sup_->cols[k]]);
        vals_[k] = b;
        r_[i] += b;
        c_[sup_->cols[k]] += b;
      }
    if (!r_.allFinite() || !c_.allFinite())
      throw std::runtime_error("balancing: overflow in scaled matrix");
  }

  const Vec& row_sums() const { return r_; }
  const Vec& col_sums() const { return c_; }
  const Vec& cached_values() const { return vals_; }
  double mass_cached() const { return r_.sum(); }

  double objective(const Vec& w) const {
    double acc = 0;
    for (int i = 0; i < n_; ++i)
      for (int k = sup_->row_ptr[i]; k < sup_->row_ptr[i + 1]; ++k) {
        acc += std::exp(-t_ * (*cv_)[k] + w[i] + w[n_ + sup_->cols[k]]);
        if (!std::isfinite(acc)) return std::numeric_limits<double>::infinity();
      }
    return acc - w.sum();
  }

  Vec apply_hessian(const Vec& y) const {
    Vec out(2 * n_);
    out.head(n_) = r_.cwiseProduct(y.head(n_));
    out.tail(n_) = c_.cwiseProduct(y.tail(n_));
    for (int i = 0; i < n_; ++i)
      for (int k = sup_->row_ptr[i]; k < sup_->row_ptr[i + 1]; ++k) {
        const int j = sup_->cols[k];
        out[i] += vals_[k] * y[n_ + j];
        out[n_ + j] += vals_[k] * y[i];
      }
    return out;
  }

  bool masked() const { return true; }

 private:
  const SupportSet* sup_;
  const Vec* cv_;
  double t_;
  int n_;
  std::vector<int> col_ptr_, col_pos_, col_row_;
  Vec vals_;
  Vec r_, c_;
};

enum class NewtonFlavor { kr, ne, lb };

template <class Kernel>
BalanceReport sk_balance_impl(Kernel& kernel, Vec& w, const BalanceConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const int n = kernel.n();
  const int max_iter = cfg.max_iter > 0 ? cfg.max_iter : 500000;
  BalanceReport rep;

  auto seconds = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  // First half-sweep sets the column potentials (SKbi).
  Vec lse;
  kernel.col_lse(w, lse);
  w.tail(n) = -lse;
  rep.iterations = 1;

  for (;;) {
    kernel.row_lse(w, lse);
    double err = 0;
    for (int i = 0; i < n; ++i) err += std::abs(std::exp(w[i] + lse[i]) - 1.0);
    rep.error = err;
    if (cfg.record_trace) rep.trace.push_back({rep.iterations, err, 0.0, 0.0, seconds()});
    if (err <= cfg.tol) {
      rep.converged = true;
      break;
    }
    if (rep.iterations >= max_iter) break;
    w.head(n) = -lse;
    kernel.col_lse(w, lse);
    w.tail(n) = -lse;
    gauge_fix_w(w, n);
    ++rep.iterations;
  }
  fill_norms(w, n, rep);
  return rep;
}

template <class Kernel>
BalanceReport newton_balance_impl(Kernel& kernel, Vec& w, const BalanceConfig& cfg,
                                  NewtonFlavor flavor) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const int n = kernel.n();
  const int max_iter = cfg.max_iter > 0 ? cfg.max_iter : 300;
  BalanceReport rep;

  Vec null_dir(2 * n);
  null_dir.head(n).setOnes();
  null_dir.tail(n).setConstant(-1.0);

  auto seconds = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  kernel.materialize(w);
  if (cfg.cold_prime && kernel.mass_cached() < 0.5 * n) {
    // Degenerate cold start (the scaled kernel carries almost no mass): one
    // log-domain Sinkhorn sweep primes the potentials before Newton runs.
    Vec lse;
    kernel.col_lse(w, lse);
    w.tail(n) = -lse;
    kernel.row_lse(w, lse);
    w.head(n) = -lse;
    gauge_fix_w(w, n);
  }

  for (int it = 0;; ++it) {
    kernel.materialize(w);
    const Vec& r = kernel.row_sums();
    const Vec& c = kernel.col_sums();
    const double err = (r.array() - 1.0).abs().sum() + (c.array() - 1.0).abs().sum();
    const double obj = kernel.mass_cached() - w.sum();
    rep.error = err;
    rep.objective = obj;
    rep.iterations = it;
    if (cfg.record_trace)
      rep.trace.push_back({it, err, obj,
                           rep.newton_decrements.empty() ? 0.0 : rep.newton_decrements.back(),
                           seconds()});
    if (err <= cfg.tol) {
      rep.converged = true;
      break;
    }
    if (it >= max_iter) break;

    Vec g(2 * n);
    g.head(n) = r.array() - 1.0;
    g.tail(n) = c.array() - 1.0;

    CgConfig cgc = cfg.cg;
    if (cgc.tol <= 0) cgc.tol = std::clamp(g.norm(), 1e-12, 0.1);
    if (cgc.max_iter <= 0) cgc.max_iter = std::min(8 * n, 400);
    Vec diag(2 * n);
    diag.head(n) = r;
    diag.tail(n) = c;
    auto apply = [&](const Vec& y) { return kernel.apply_hessian(y); };
    CgResult sol = cg_solve(apply, g, cgc, &diag, &null_dir);
    if (sol.breakdown || (!sol.converged && sol.rel_residual > 0.5)) {
      // near-singular Hessian: retry with a small diagonal shift (regularized matrix)
      CgConfig shifted = cgc;
      shifted.eps_reg = 1e-12 * diag.maxCoeff();
      CgResult again = cg_solve(apply, g, shifted, &diag, &null_dir);
      if (again.rel_residual < sol.rel_residual) sol = again;
    }
    const Vec& y = sol.x;
    const double lambda2 = g.dot(y);  // squared Newton decrement
    rep.newton_decrements.push_back(lambda2);
    if (!(lambda2 > 0)) break;  // no usable descent direction

    if (flavor == NewtonFlavor::kr) {
      // Knight-Ruiz: modified Newton step with unit step size.
      double alpha = 1.0;
      const double ymax = y.maxCoeff();
      if (ymax >= 1.0) alpha = 0.95 / ymax;  // keep 1 - alpha*y positive
      Vec w_trial;
      for (int half = 0; half < 60; ++half) {
        w_trial = w + (1.0 - alpha * y.array()).log().matrix();
        if (std::isfinite(kernel.objective(w_trial))) break;
        alpha *= cfg.step_shrink;
      }
      w = w_trial;
    } else {
      double alpha = cfg.step_init;
      if (flavor == NewtonFlavor::lb) {
        const double ymax = y.maxCoeff();
        if (ymax > 0) alpha = std::min(alpha, 0.95 / ymax);
      }
      bool accepted = false;
      for (int half = 0; half < 60; ++half) {
        Vec w_trial = flavor == NewtonFlavor::ne
                          ? Vec(w - alpha * y)
                          : Vec(w + (1.0 - alpha * y.array()).log().matrix());
        const double trial = kernel.objective(w_trial);
        if (std::isfinite(trial) && trial <= obj - cfg.step_c1 * alpha * lambda2) {
          w = std::move(w_trial);
          accepted = true;
          break;
        }
        alpha *= cfg.step_shrink;
      }
      if (!accepted) break;  // stalled line search
    }
    gauge_fix_w(w, n);
  }
  fill_norms(w, n, rep);
  return rep;
}

template <class Kernel>
BalanceReport run_balance(BalanceMethod m, Kernel& kernel, Vec& w, const BalanceConfig& cfg) {
  switch (m) {
    case BalanceMethod::SK: return sk_balance_impl(kernel, w, cfg);
    case BalanceMethod::KR: return newton_balance_impl(kernel, w, cfg, NewtonFlavor::kr);
    case BalanceMethod::NE: return newton_balance_impl(kernel, w, cfg, NewtonFlavor::ne);
    case BalanceMethod::LB: return newton_balance_impl(kernel, w, cfg, NewtonFlavor::lb);
  }
  throw std::logic_error("unreachable");
}

inline Vec gather_support_costs(const SupportSet& sup, const Mat& cost) {
  Vec cv(static_cast<Eigen::Index>(sup.size()));
  for (int i = 0; i < sup.n; ++i)
    for (int k = sup.row_ptr[i]; k < sup.row_ptr[i + 1]; ++k) cv[k] = cost(i, sup.cols[k]);
  return cv;
}

inline void check_support_precondition(const BalancerState& state) {
  if (state.support && !state.support->certified_total && !has_support(*state.support))
    throw std::invalid_argument("balancing: masked cost has no support (no positive diagonal)");
}

}  // namespace detail

// Scaled matrix A(nu) with entries exp(-t (c_ij - nu1_i - nu2_j)), restricted
// to the support when present.
inline TransportPlan balanced_matrix(const BalancerState& state, const Mat& cost) {
  const int n = state.n;
  const Vec& nu = state.nu;
  if (!state.support) {
    Vec vals(static_cast<Eigen::Index>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        vals[static_cast<Eigen::Index>(i) * n + j] =
            std::exp(-state.t * (cost(i, j) - nu[i] - nu[n + j]));
    if (!vals.allFinite()) throw std::runtime_error("balanced_matrix: overflow");
    return TransportPlan::dense(n, std::move(vals));
  }
  const SupportSet& sup = *state.support;
  Vec vals(static_cast<Eigen::Index>(sup.size()));
  for (int i = 0; i < n; ++i)
    for (int k = sup.row_ptr[i]; k < sup.row_ptr[i + 1]; ++k)
      vals[k] = std::exp(-state.t * (cost(i, sup.cols[k]) - nu[i] - nu[n + sup.cols[k]]));
  if (!vals.allFinite()) throw std::runtime_error("balanced_matrix: overflow");
  return TransportPlan::sparse(sup, std::move(vals));
}

inline BalanceReport balance(BalanceMethod method, BalancerState& state, const Mat& cost,
                             const BalanceConfig& cfg = {}) {
  detail::check_support_precondition(state);
  Vec w = state.t * state.nu;
  BalanceReport rep;
  if (!state.support) {
    detail::DenseLogKernel k(cost, state.t);
    rep = detail::run_balance(method, k, w, cfg);
  } else {
    const Vec cv = detail::gather_support_costs(*state.support, cost);
    detail::SparseLogKernel k(*state.support, cv, state.t);
    rep = detail::run_balance(method, k, w, cfg);
  }
  state.nu = w / state.t;
  state.gauge_fix();
  return rep;
}

// Masked balancing with explicit per-entry costs (for lazily generated costs).
inline BalanceReport balance_masked(BalanceMethod method, BalancerState& state, const Vec& cvals,
                                    const BalanceConfig& cfg = {}) {
  if (!state.support) throw std::invalid_argument("balance_masked: state has no support");
  detail::check_support_precondition(state);
  Vec w = state.t * state.nu;
  detail::SparseLogKernel k(*state.support, cvals, state.t);
  BalanceReport rep = detail::run_balance(method, k, w, cfg);
  state.nu = w / state.t;
  state.gauge_fix();
  return rep;
}

inline BalanceReport sk_balance(BalancerState& s, const Mat& c, const BalanceConfig& cfg = {}) {
  return balance(BalanceMethod::SK, s, c, cfg);
}
inline BalanceReport kr_balance(BalancerState& s, const Mat& c, const BalanceConfig& cfg = {}) {
  return balance(BalanceMethod::KR, s, c, cfg);
}
inline BalanceReport ne_balance(BalancerState& s, const Mat& c, const BalanceConfig& cfg = {}) {
  return balance(BalanceMethod::NE, s, c, cfg);
}
inline BalanceReport lb_balance(BalancerState& s, const Mat& c, const BalanceConfig& cfg = {}) {
  return balance(BalanceMethod::LB, s, c, cfg);
}

struct PathPoint {
  double t = 0;
  BalancerState state;  // snapshot after balancing at t
  BalanceReport report;
};

// Warm-started continuation: at each t_k balance the shifted matrix
// exp(-t_k (c - M' nu_{k-1})) and accumulate the increment into nu. On a
// balancing failure the trace collected so far is returned with the failing
// point last (report.converged == false).
inline std::vector<PathPoint> stabilized_path(const Mat& cost, const std::vector<double>& ts,
                                              BalanceMethod method, const BalanceConfig& cfg = {},
                                              std::optional<SupportSet> sup = {}) {
  for (std::size_t k = 1; k < ts.size(); ++k)
    if (ts[k] <= ts[k - 1]) throw std::invalid_argument("stabilized_path: ts must increase");
  if (ts.empty()) throw std::invalid_argument("stabilized_path: empty schedule");
  BalancerState state = BalancerState::init(static_cast<int>(cost.rows()), ts.front(), sup);
  std::vector<PathPoint> out;
  for (double t : ts) {
    state.t = t;
    BalanceReport rep = balance(method, state, cost, cfg);
    out.push_back({t, state, rep});
    if (!rep.converged) break;
  }
  return out;
}

inline std::vector<PathPoint> stabilized_path(const Mat& cost, const PathSchedule& sched,
                                              BalanceMethod method, const BalanceConfig& cfg = {},
                                              std::optional<SupportSet> sup = {}) {
  return stabilized_path(cost, sched.points(), method, cfg, std::move(sup));
}

}  // namespace otb
