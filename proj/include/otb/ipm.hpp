#pragma once

#include "otb/balancing.hpp"
#include "otb/cg.hpp"
#include "otb/core.hpp"
#include "otb/plan.hpp"
#include "otb/support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace otb {

struct CenteringConfig {
  double gamma_lo = 0.5;   // gamma' of the entrywise band
  double gamma_hi = 2.0;   // gamma''
  double decrement_tol = 0.0;  // 0: adaptive 1e-13 * n^2 / t
  int max_newton = 60;
  // Exit on the entrywise band alone (the cheap exit of the inner loop).
  // Off by default so centered iterates satisfy the gap identity
  // c'x - 1'nu = n^2/t to the tolerance the diagnostics assert.
  bool band_exit = false;
  CgConfig cg{1e-13, 0, 0.0};
};

struct CenteringResult {
  Vec x;
  Vec nu;
  int iterations = 0;
  double decrement = std::numeric_limits<double>::infinity();  // squared
  bool centered = false;  // decrement criterion met
  bool band = false;      // gamma'/t <= x.*s <= gamma''/t at exit
};

namespace detail {

// Barrier objective c'x - (1/t) sum log x.
inline double barrier_objective(const Vec& c, const Vec& x, double t) {
  double logsum = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] <= 0) return std::numeric_limits<double>::infinity();
    logsum += std::log(x[i]);
  }
  return c.dot(x) - logsum / t;
}

}  // namespace detail

// Newton centering for min c'x - (1/t) sum log x over Mx = 1. Directions are
// computed matrix-free: the least-squares multiplier solves the normal
// equation (M diag(x^2) M') nu = M (x^2 .* g) with g = c - (1/t) x^{-1}; the
// step is d = -t x^2 .* (g - M'nu), which lies in the null space of M.
inline CenteringResult newton_center(const Mat& cost, double t, const Vec& x_start,
                                     const CenteringConfig& cfg = {}) {
  const int n = static_cast<int>(cost.rows());
  const Vec c = unreshape(cost);
  if (x_start.size() != c.size())
    throw std::invalid_argument("newton_center: start size mismatch");
  if ((x_start.array() <= 0).any())
    throw std::invalid_argument("newton_center: start must be strictly positive");

  const double dec_tol = cfg.decrement_tol > 0 ? cfg.decrement_tol : 1e-13 * n * n / t;

  Vec null_dir(2 * n);
  null_dir.head(n).setOnes();
  null_dir.tail(n).setConstant(-1.0);

  CenteringResult res;
  res.x = x_start;

  for (int it = 0; it <= cfg.max_newton; ++it) {
    const Vec& x = res.x;
    Vec x2 = x.cwiseProduct(x);
    Vec g = c - (1.0 / t) * x.cwiseInverse();
    Vec rhs = apply_marginal(x2.cwiseProduct(g), n);
    Vec diag = apply_marginal(x2, n);

    CgConfig cgc = cfg.cg;
    if (cgc.max_iter <= 0) cgc.max_iter = 16 * n;
    auto apply = [&](const Vec& y) { return schur_apply(x2, y); };
    CgResult sol = cg_solve(apply, rhs, cgc, &diag, &null_dir);
    if (!sol.converged && sol.rel_residual > 1e-6) {
      cgc.eps_reg = 1e-12 * diag.maxCoeff();
      sol = cg_solve(apply, rhs, cgc, &diag, &null_dir);
      if (!sol.converged && sol.rel_residual > 1e-2) {
        res.nu = sol.x;
        return res;  // centering failed at this t
      }
    }
    res.nu = sol.x;
    res.iterations = it;

    Vec e = g - apply_adjoint(res.nu);       // slack of the shifted gradient
    Vec xe = x.cwiseProduct(e);
    res.decrement = t * xe.squaredNorm();    // squared Newton decrement

    // entrywise band on x .* s with s = c - M'nu
    Vec xs = xe.array() + 1.0 / t;
    res.band = (xs.array() >= cfg.gamma_lo / t).all() && (xs.array() <= cfg.gamma_hi / t).all();

    if (res.decrement <= dec_tol) {
      res.centered = true;
      return res;
    }
    if (cfg.band_exit && res.band) return res;
    if (it == cfg.max_newton) break;

    Vec d = -t * x2.cwiseProduct(e);
    // keep strictly feasible: alpha <= 0.99 * max step to the boundary
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (d[i] < 0) alpha = std::min(alpha, -0.99 * x[i] / d[i]);
    const double f0 = detail::barrier_objective(c, x, t);
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      Vec x_trial = x + alpha * d;
      const double f1 = detail::barrier_objective(c, x_trial, t);
      if (std::isfinite(f1) && f1 <= f0 - 1e-4 * alpha * res.decrement) {
        res.x = std::move(x_trial);
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return res;  // stalled; not centered
  }
  return res;
}

struct DualityDiagnostics {
  double gap = 0;            // <c,x> - <1,nu>
  double infeasibility = 0;  // ||Mx - 1||_1
  double nu_inf = 0;         // ||nu||_inf
  double certificate = 0;    // eps*delta + |Sigma| / (e t)
};

inline DualityDiagnostics duality_diagnostics(const Mat& cost, const TransportPlan& plan,
                                              const Vec& nu, double t,
                                              std::size_t support_size = 0) {
  DualityDiagnostics d;
  d.gap = plan.dot_cost(cost) - nu.sum();
  d.infeasibility = plan.infeasibility();
  d.nu_inf = nu.lpNorm<Eigen::Infinity>();
  const std::size_t sz = support_size ? support_size : plan.active_size();
  d.certificate = d.infeasibility * d.nu_inf + static_cast<double>(sz) / (std::exp(1.0) * t);
  return d;
}

// Rounding to an exact optimal permutation. If one assignment dominates its
// rows by the factor gamma_lo/gamma_hi and forms a permutation, build the
// dual by nu1_i = c_{i,J(i)} - nu2_{J(i)} and verify the exact KKT pair
// (s >= 0 and s .* x = 0) before returning it.
inline std::optional<std::pair<TransportPlan, Vec>> try_early_termination(
    const TransportPlan& plan, const Vec& nu_t, const Mat& cost, double gamma_lo = 0.5,
    double gamma_hi = 2.0) {
  const int n = plan.n;
  const double ratio = gamma_lo / gamma_hi;
  std::vector<int> J(n, -1);
  std::vector<char> used(n, 0);
  for (int i = 0; i < n; ++i) {
    double best = -1;
    int arg = -1;
    if (!plan.support) {
      for (int j = 0; j < n; ++j) {
        const double v = plan.values[static_cast<Eigen::Index>(i) * n + j];
        if (v > best) { best = v; arg = j; }
      }
    } else {
      for (int k = plan.support->row_ptr[i]; k < plan.support->row_ptr[i + 1]; ++k)
        if (plan.values[k] > best) { best = plan.values[k]; arg = plan.support->cols[k]; }
    }
    if (arg < 0 || best <= 0) return std::nullopt;
    // dominance over the rest of the row
    if (!plan.support) {
      for (int j = 0; j < n; ++j)
        if (j != arg && plan.values[static_cast<Eigen::Index>(i) * n + j] > ratio * best)
          return std::nullopt;
    } else {
      for (int k = plan.support->row_ptr[i]; k < plan.support->row_ptr[i + 1]; ++k)
        if (plan.support->cols[k] != arg && plan.values[k] > ratio * best) return std::nullopt;
    }
    if (used[arg]) return std::nullopt;  // not a permutation
    used[arg] = 1;
    J[i] = arg;
  }

  Vec nu(2 * n);
  nu.tail(n) = nu_t.tail(n);
  for (int i = 0; i < n; ++i) nu[i] = cost(i, J[i]) - nu[n + J[i]];

  // exact KKT verification, independent of the trigger logic
  const double tol = 1e-9 * (1.0 + cost.cwiseAbs().maxCoeff());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double s = cost(i, j) - nu[i] - nu[n + j];
      if (s < -tol) return std::nullopt;
      if (j == J[i] && std::abs(s) > tol) return std::nullopt;
    }
  return std::make_pair(TransportPlan::permutation(n, J), nu);
}

enum class Termination { gap_met, early_terminated, budget_exhausted };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::gap_met: return "gap_met";
    case Termination::early_terminated: return "early_terminated";
    case Termination::budget_exhausted: return "budget_exhausted";
  }
  return "?";
}

struct TraceRow {
  double t = 0;
  double gap = 0;
  double relative_gap = 0;
  double infeasibility = 0;
  double nu_inf = 0;
  double certificate = 0;
  std::size_t support_size = 0;
  double seconds = 0;
  double balance_error = 0;
  int inner_iterations = 0;
  bool centered = true;
};

struct SolveReport {
  double duality_gap = std::numeric_limits<double>::infinity();
  double relative_gap = std::numeric_limits<double>::infinity();
  double t_achieved = 0;
  Termination termination = Termination::budget_exhausted;
  bool has_reference = false;
  std::vector<TraceRow> trace;
};

struct SolveResult {
  Vec nu;
  TransportPlan plan;
  SolveReport report;
};

struct SolveConfig {
  PathSchedule schedule{1.0, 1.5, 1e7};
  // NE is the globally convergent damped Newton; KR is often faster but its
  // unit step can stall on adversarial instances.
  BalanceMethod method = BalanceMethod::NE;
  BalanceConfig balance;  // balance.tol == 0: eps_MB = 1e-5 sqrt(n)
  double gap_tol = 1e-5;
  bool gap_tol_relative = true;
  std::optional<double> reference_optimum;
  bool early_termination = true;
  double early_termination_min_t = 100.0;
  double gamma_lo = 0.5, gamma_hi = 2.0;
};

namespace detail {

inline double eps_mb(const SolveConfig& cfg, int n) {
  return cfg.balance.tol > 0 ? cfg.balance.tol : 1e-5 * std::sqrt(static_cast<double>(n));
}

// Newton balancing occasionally breaks down on a degenerate kernel; a
// bounded budget of log-domain Sinkhorn sweeps often still converges there.
inline BalanceReport balance_with_rescue(BalanceMethod method, BalancerState& state,
                                         const Mat& cost, const BalanceConfig& cfg) {
  BalanceReport rep = balance(method, state, cost, cfg);
  if (!rep.converged && method != BalanceMethod::SK) {
    BalanceConfig rescue = cfg;
    // sweep budget shrinks with problem size; a rescue must stay cheap
    rescue.max_iter = state.n <= 500 ? 2000 : 300;
    BalanceReport second = balance(BalanceMethod::SK, state, cost, rescue);
    if (second.converged) {
      second.iterations += rep.iterations;
      return second;
    }
  }
  return rep;
}

// Relative gap denominator: the supplied reference optimum, else the current
// primal value.
inline double gap_denominator(const SolveConfig& cfg, double primal) {
  const double ref = cfg.reference_optimum.value_or(primal);
  return std::max(std::abs(ref), 1e-300);
}

inline bool gap_met(const SolveConfig& cfg, double gap, double primal) {
  if (!cfg.gap_tol_relative) return std::abs(gap) <= cfg.gap_tol;
  return std::abs(gap) <= cfg.gap_tol * gap_denominator(cfg, primal);
}

struct PathStepOutcome {
  bool stop = false;
  Termination why = Termination::budget_exhausted;
};

}  // namespace detail

// Negative-entropy interior point path (dense): balance exp(-t(c - M'nu))
// along the t-schedule; at each converged t the plan x = exp(-t(c - M'nu))
// is the entropic central point.
inline SolveResult snne_solve(const Mat& cost, const SolveConfig& cfg = {}) {
  const int n = static_cast<int>(cost.rows());
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  BalanceConfig bcfg = cfg.balance;
  bcfg.tol = detail::eps_mb(cfg, n);
  bcfg.record_trace = false;

  SolveResult out;
  out.report.has_reference = cfg.reference_optimum.has_value();
  BalancerState state = BalancerState::init(n, cfg.schedule.t0);
  out.plan = TransportPlan::uniform(n);
  out.nu = state.nu;

  for (double t : cfg.schedule.points()) {
    state.t = t;
    BalanceReport rep = detail::balance_with_rescue(cfg.method, state, cost, bcfg);
    const double secs = std::chrono::duration<double>(clock::now() - start).count();
    if (!rep.converged) {
      out.report.trace.push_back({t, 0, 0, 0, 0, 0, static_cast<std::size_t>(n) * n, secs,
                                  rep.error, rep.iterations, false});
      out.report.termination = Termination::budget_exhausted;
      return out;  // partial report; t_achieved is the previous t
    }
    out.plan = balanced_matrix(state, cost);
    out.nu = state.nu;
    const DualityDiagnostics d = duality_diagnostics(cost, out.plan, state.nu, t);
    const double primal = out.plan.dot_cost(cost);
    TraceRow row{t, d.gap, d.gap / detail::gap_denominator(cfg, primal), d.infeasibility,
                 d.nu_inf, d.certificate, out.plan.active_size(), secs, rep.error,
                 rep.iterations, true};
    out.report.trace.push_back(row);
    out.report.duality_gap = d.gap;
    out.report.relative_gap = row.relative_gap;
    out.report.t_achieved = t;

    if (cfg.early_termination && t >= cfg.early_termination_min_t) {
      if (auto et = try_early_termination(out.plan, state.nu, cost, cfg.gamma_lo, cfg.gamma_hi)) {
        out.plan = std::move(et->first);
        out.nu = std::move(et->second);
        out.report.duality_gap = out.plan.dot_cost(cost) - out.nu.sum();
        out.report.relative_gap =
            out.report.duality_gap / detail::gap_denominator(cfg, out.plan.dot_cost(cost));
        out.report.termination = Termination::early_terminated;
        return out;
      }
    }
    if (detail::gap_met(cfg, d.gap, primal)) {
      out.report.termination = Termination::gap_met;
      return out;
    }
  }
  out.report.termination = Termination::budget_exhausted;
  return out;
}

struct SparseSolveConfig {
  int k = 20;           // k-smallest selection; 0 selects by threshold eps
  double eps = 0.0;     // threshold variant
  int xi_max = 3;
  bool dynamic_sigma = false;  // greedy heavy-diagonal sigma in totalize
  // Full row-and-column selection (2kn entries, |Sigma| <= (4k+1)n after the
  // total-support completion). Row-only selection keeps |Sigma| <= (2k+1)n
  // but can lock onto suboptimal support fixed points.
  bool rows_and_cols = true;
};

namespace detail {

template <class CostFn>
SupportSet build_support(int n, CostFn&& cost, const Vec& nu, const SparseSolveConfig& scfg,
                         const std::vector<int>& sigma) {
  std::vector<IndexPair> pairs;
  if (scfg.k > 0) {
    const int k = std::min(scfg.k, n);
    if (scfg.rows_and_cols) {
      pairs = detail::k_smallest_select_fn(n, cost, nu, k);
    } else {
      std::vector<std::pair<double, int>> buf(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) buf[j] = {cost(i, j) - nu[i] - nu[n + j], j};
        std::nth_element(buf.begin(), buf.begin() + (k - 1), buf.end());
        std::sort(buf.begin(), buf.begin() + k);
        for (int m = 0; m < k; ++m) pairs.push_back({i, buf[m].second});
      }
    }
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (cost(i, j) - nu[i] - nu[n + j] < scfg.eps) pairs.push_back({i, j});
  }
  return totalize(n, pairs, sigma);
}

}  // namespace detail

// SNNE with sparse total-support constraints (outer support-update loop over
// xi, inner t-path on the masked kernel).
inline SolveResult snne_sparse_solve(const Mat& cost, const SparseSolveConfig& scfg,
                                     const SolveConfig& cfg = {}) {
  const int n = static_cast<int>(cost.rows());
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto entry = [&](int i, int j) { return cost(i, j); };

  BalanceConfig bcfg = cfg.balance;
  bcfg.tol = detail::eps_mb(cfg, n);
  bcfg.record_trace = false;

  SolveResult out;
  out.report.has_reference = cfg.reference_optimum.has_value();
  Vec nu = Vec::Zero(2 * n);
  SupportSet sigma = detail::build_support(n, entry, nu, scfg, {});

  for (int xi = 0; xi <= scfg.xi_max; ++xi) {
    BalancerState state = BalancerState::init(n, cfg.schedule.t0, sigma);
    state.nu = nu;
    for (double t : cfg.schedule.points()) {
      state.t = t;
      BalanceReport rep = detail::balance_with_rescue(cfg.method, state, cost, bcfg);
      const double secs = std::chrono::duration<double>(clock::now() - start).count();
      if (!rep.converged) {
        out.report.trace.push_back({t, 0, 0, 0, 0, 0, sigma.size(), secs, rep.error,
                                    rep.iterations, false});
        out.report.termination = Termination::budget_exhausted;
        out.nu = state.nu;
        out.plan = balanced_matrix(state, cost);
        return out;
      }
      out.plan = balanced_matrix(state, cost);
      out.nu = state.nu;
      const DualityDiagnostics d = duality_diagnostics(cost, out.plan, state.nu, t);
      const double primal = out.plan.dot_cost(cost);
      out.report.trace.push_back({t, d.gap, d.gap / detail::gap_denominator(cfg, primal),
                                  d.infeasibility, d.nu_inf, d.certificate, sigma.size(), secs,
                                  rep.error, rep.iterations, true});
      out.report.duality_gap = d.gap;
      out.report.relative_gap = out.report.trace.back().relative_gap;
      out.report.t_achieved = t;

      if (cfg.early_termination && t >= cfg.early_termination_min_t) {
        if (auto et = try_early_termination(out.plan, state.nu, cost, cfg.gamma_lo, cfg.gamma_hi)) {
          out.plan = std::move(et->first);
          out.nu = std::move(et->second);
          out.report.duality_gap = out.plan.dot_cost(cost) - out.nu.sum();
          out.report.relative_gap = out.report.duality_gap /
                                    detail::gap_denominator(cfg, out.plan.dot_cost(cost));
          out.report.termination = Termination::early_terminated;
          return out;
        }
      }
    }
    nu = state.nu;

    std::vector<int> perm;
    if (scfg.dynamic_sigma) perm = greedy_diagonal(out.plan.to_dense_matrix());
    SupportSet next = detail::build_support(n, entry, nu, scfg, perm);
    if (next.same_indices(sigma)) {
      // fixed point: the plan is the approximate optimal point
      out.report.termination = detail::gap_met(cfg, out.report.duality_gap,
                                               out.plan.dot_cost(cost))
                                   ? Termination::gap_met
                                   : Termination::budget_exhausted;
      return out;
    }
    sigma = std::move(next);
  }
  return out;
}

// Log-barrier interior point method with matrix balancing as the feasibility
// projection (the illustration algorithm of the framework).
inline SolveResult ipmb_solve(const Mat& cost, const SolveConfig& cfg = {},
                              const CenteringConfig& ccfg = {}) {
  const int n = static_cast<int>(cost.rows());
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const double mb_tol = detail::eps_mb(cfg, n);

  SolveResult out;
  out.report.has_reference = cfg.reference_optimum.has_value();
  Vec x = Vec::Constant(static_cast<Eigen::Index>(n) * n, 1.0 / n);
  out.plan = TransportPlan::dense(n, x);
  out.nu = Vec::Zero(2 * n);

  for (double t : cfg.schedule.points()) {
    CenteringResult c = newton_center(cost, t, x, ccfg);
    const double secs = std::chrono::duration<double>(clock::now() - start).count();
    if (!c.centered && !(ccfg.band_exit && c.band)) {
      out.report.trace.push_back({t, 0, 0, 0, 0, 0, static_cast<std::size_t>(n) * n, secs, 0,
                                  c.iterations, false});
      out.report.termination = Termination::budget_exhausted;
      return out;  // centering failed; t_achieved holds the last good t
    }
    x = c.x;
    out.nu = c.nu;
    out.plan = TransportPlan::dense(n, x);

    if (out.plan.infeasibility() > mb_tol) {
      // project back onto the doubly stochastic set by balancing the values
      Mat logc(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          logc(i, j) = -std::log(x[static_cast<Eigen::Index>(i) * n + j]);
      BalancerState proj = BalancerState::init(n, 1.0);
      BalanceConfig pcfg;
      pcfg.tol = 0.1 * mb_tol;
      pcfg.record_trace = false;
      balance(BalanceMethod::SK, proj, logc, pcfg);
      TransportPlan projected = balanced_matrix(proj, logc);
      x = projected.values;
      out.plan = std::move(projected);
    }

    const DualityDiagnostics d = duality_diagnostics(cost, out.plan, out.nu, t);
    const double primal = out.plan.dot_cost(cost);
    out.report.trace.push_back({t, d.gap, d.gap / detail::gap_denominator(cfg, primal),
                                d.infeasibility, d.nu_inf, d.certificate,
                                static_cast<std::size_t>(n) * n, secs, out.plan.infeasibility(),
                                c.iterations, c.centered});
    out.report.duality_gap = d.gap;
    out.report.relative_gap = out.report.trace.back().relative_gap;
    out.report.t_achieved = t;

    if (cfg.early_termination && t >= cfg.early_termination_min_t) {
      if (auto et = try_early_termination(out.plan, out.nu, cost, cfg.gamma_lo, cfg.gamma_hi)) {
        out.plan = std::move(et->first);
        out.nu = std::move(et->second);
        out.report.duality_gap = out.plan.dot_cost(cost) - out.nu.sum();
        out.report.relative_gap = out.report.duality_gap /
                                  detail::gap_denominator(cfg, out.plan.dot_cost(cost));
        out.report.termination = Termination::early_terminated;
        return out;
      }
    }
    const double gap_bound = static_cast<double>(n) * n / t;
    const double denom = cfg.gap_tol_relative ? detail::gap_denominator(cfg, primal) : 1.0;
    if (gap_bound < cfg.gap_tol * denom) {
      out.report.termination = Termination::gap_met;
      return out;
    }
  }
  out.report.termination = Termination::budget_exhausted;
  return out;
}

}  // namespace otb
