#pragma once

#include "otb/balancing.hpp"
#include "otb/core.hpp"
#include "otb/ipm.hpp"
#include "otb/plan.hpp"
#include "otb/support.hpp"

#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace otb {

struct RigidTransform {
  Mat Q;                           // d x d orthogonal (reflections allowed)
  double regularizer_weight = 0;   // the eta of the cross-moment regularizer
};

struct RegistrationIterRow {
  int iter = 0;
  double t = 0;  // 0 for the plain alternation
  double error = 0;
  double transport_seconds = 0;
  double svd_seconds = 0;
  std::size_t support_size = 0;
};

struct RegistrationReport {
  double error = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<RegistrationIterRow> trace;
};

struct RegistrationResult {
  RigidTransform transform;
  TransportPlan plan;
  RegistrationReport report;
};

struct RegistrationConfig {
  int outer_budget = 50;
  double error_target = 1e-4;
  double regularizer_weight = -1;  // <0: 1e-6 * mean squared point norm
  bool det_correction = false;     // force det(Q) = +1
  SolveConfig transport;           // inner OT settings
  int k = 20;                      // sparse support parameter
  int xi_max = 3;
};

namespace detail {

inline void center_rows(Mat& Y) {
  const Eigen::RowVectorXd mean = Y.colwise().mean();
  Y.rowwise() -= mean;
}

inline double default_eta(const RegistrationConfig& cfg, const Mat& Y) {
  if (cfg.regularizer_weight >= 0) return cfg.regularizer_weight;
  return 1e-6 * Y.rowwise().squaredNorm().mean();
}

inline Mat orthogonal_factor(Mat H, bool det_correction) {
  Eigen::JacobiSVD<Mat> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat Q = svd.matrixU() * svd.matrixV().transpose();
  if (det_correction && Q.determinant() < 0) {
    Mat U = svd.matrixU();
    U.col(U.cols() - 1) *= -1.0;
    Q = U * svd.matrixV().transpose();
  }
  return Q;
}

}  // namespace detail

// Procrustes update: Q = U V' from the SVD of sum_ij x_ij y_i z_j' + eta I,
// the cross-moment accumulated over the plan's support only.
inline Mat svd_update(const Mat& Y, const Mat& Z, const TransportPlan& plan, double eta,
                      bool det_correction = false) {
  const int d = static_cast<int>(Y.cols());
  Mat H = eta * Mat::Identity(d, d);
  if (!plan.support) {
    for (int i = 0; i < plan.n; ++i)
      for (int j = 0; j < plan.n; ++j) {
        const double v = plan.values[static_cast<Eigen::Index>(i) * plan.n + j];
        if (v != 0.0) H += v * Y.row(i).transpose() * Z.row(j);
      }
  } else {
    for (int i = 0; i < plan.n; ++i)
      for (int k = plan.support->row_ptr[i]; k < plan.support->row_ptr[i + 1]; ++k)
        H += plan.values[k] * Y.row(i).transpose() * Z.row(plan.support->cols[k]);
  }
  if (eta == 0.0 &&
      Eigen::JacobiSVD<Mat>(H).singularValues().minCoeff() < 1e-12 * (1 + H.norm()))
    throw std::runtime_error("svd_update: rank-deficient cross-moment; use eta > 0");
  return detail::orthogonal_factor(std::move(H), det_correction);
}

// Alternating full OT solves and Procrustes updates on the dense cost
// c(Q)_{ij} = ||y_i - Q z_j||^2. Y is re-centered once on entry.
inline RegistrationResult register_rigid(Mat Y, const Mat& Z, const RegistrationConfig& cfg = {}) {
  if (Y.rows() != Z.rows() || Y.cols() != Z.cols())
    throw std::invalid_argument("register_rigid: cardinality mismatch");
  detail::center_rows(Y);
  const int n = static_cast<int>(Y.rows());
  const int d = static_cast<int>(Y.cols());
  const double eta = detail::default_eta(cfg, Y);
  using clock = std::chrono::steady_clock;

  RegistrationResult out;
  out.transform.Q = Mat::Identity(d, d);
  out.transform.regularizer_weight = eta;
  out.plan = TransportPlan::uniform(n);

  for (int it = 1; it <= cfg.outer_budget; ++it) {
    const auto t0 = clock::now();
    const Mat Zq = Z * out.transform.Q.transpose();
    const Mat cost = l2_cost(Y, Zq);
    SolveResult sol = snne_solve(cost, cfg.transport);
    out.plan = std::move(sol.plan);
    double error = out.plan.dot_cost(cost);
    const double tsec = std::chrono::duration<double>(clock::now() - t0).count();

    const auto t1 = clock::now();
    if (error > cfg.error_target) {
      out.transform.Q = svd_update(Y, Z, out.plan, eta, cfg.det_correction);
      const Mat cost2 = l2_cost(Y, Z * out.transform.Q.transpose());
      error = out.plan.dot_cost(cost2);
    }
    const double ssec = std::chrono::duration<double>(clock::now() - t1).count();

    out.report.trace.push_back({it, 0.0, error, tsec, ssec, out.plan.active_size()});
    out.report.error = error;
    out.report.iterations = it;
    if (error <= cfg.error_target) {
      out.report.converged = true;
      break;
    }
  }
  return out;
}

// Single-path entropic variant: one t-schedule is shared by the transport and
// transform updates. At each t the masked kernel is balanced on the current
// total-support set (rebuilt from nu up to xi_max times), then Q is updated
// by SVD. Costs are evaluated lazily per support entry.
inline RegistrationResult register_rigid_entropic(Mat Y, const Mat& Z,
                                                  const RegistrationConfig& cfg = {}) {
  if (Y.rows() != Z.rows() || Y.cols() != Z.cols())
    throw std::invalid_argument("register_rigid_entropic: cardinality mismatch");
  detail::center_rows(Y);
  const int n = static_cast<int>(Y.rows());
  const int d = static_cast<int>(Y.cols());
  const double eta = detail::default_eta(cfg, Y);
  using clock = std::chrono::steady_clock;

  RegistrationResult out;
  out.transform.Q = Mat::Identity(d, d);
  out.transform.regularizer_weight = eta;

  auto cost_entry = [&](int i, int j) {
    return (Y.row(i) - Z.row(j) * out.transform.Q.transpose()).squaredNorm();
  };
  auto gather = [&](const SupportSet& sup) {
    Vec cv(static_cast<Eigen::Index>(sup.size()));
    for (int i = 0; i < n; ++i)
      for (int k = sup.row_ptr[i]; k < sup.row_ptr[i + 1]; ++k)
        cv[k] = cost_entry(i, sup.cols[k]);
    return cv;
  };

  SparseSolveConfig scfg;
  scfg.k = cfg.k;
  scfg.xi_max = cfg.xi_max;

  BalanceConfig bcfg = cfg.transport.balance;
  bcfg.tol = detail::eps_mb(cfg.transport, n);
  bcfg.record_trace = false;

  BalancerState state = BalancerState::init(
      n, cfg.transport.schedule.t0,
      detail::build_support(n, cost_entry, Vec::Zero(2 * n), scfg, {}));

  int iter = 0;
  for (double t : cfg.transport.schedule.points()) {
    state.t = t;
    const auto t0 = clock::now();
    Vec cvals;
    for (int xi = 0; xi < std::max(1, cfg.xi_max); ++xi) {
      cvals = gather(*state.support);
      BalanceReport rep = balance_masked(cfg.transport.method, state, cvals, bcfg);
      if (!rep.converged && cfg.transport.method != BalanceMethod::SK) {
        BalanceConfig rescue = bcfg;
        rescue.max_iter = 2000;
        rep = balance_masked(BalanceMethod::SK, state, cvals, rescue);
      }
      if (!rep.converged) {
        out.report.error = std::numeric_limits<double>::infinity();
        return out;  // partial report
      }
      SupportSet next = detail::build_support(n, cost_entry, state.nu, scfg, {});
      if (next.same_indices(*state.support)) break;
      state.support = std::move(next);
    }
    // plan on the current support at this t
    Vec vals(static_cast<Eigen::Index>(state.support->size()));
    cvals = gather(*state.support);
    for (Eigen::Index k = 0; k < vals.size(); ++k) vals[k] = 0;
    {
      const SupportSet& sup = *state.support;
      for (int i = 0; i < n; ++i)
        for (int k = sup.row_ptr[i]; k < sup.row_ptr[i + 1]; ++k)
          vals[k] = std::exp(-t * (cvals[k] - state.nu[i] - state.nu[n + sup.cols[k]]));
    }
    out.plan = TransportPlan::sparse(*state.support, std::move(vals));
    const double tsec = std::chrono::duration<double>(clock::now() - t0).count();

    const auto t1 = clock::now();
    out.transform.Q = svd_update(Y, Z, out.plan, eta, cfg.det_correction);
    const double ssec = std::chrono::duration<double>(clock::now() - t1).count();

    double error = 0;  // <c(Q), x> on the support with the fresh Q
    {
      const SupportSet& sup = *state.support;
      for (int i = 0; i < n; ++i)
        for (int k = sup.row_ptr[i]; k < sup.row_ptr[i + 1]; ++k)
          error += out.plan.values[k] * cost_entry(i, sup.cols[k]);
    }
    ++iter;
    out.report.trace.push_back({iter, t, error, tsec, ssec, state.support->size()});
    out.report.error = error;
    out.report.iterations = iter;
    if (error <= cfg.error_target) {
      out.report.converged = true;
      break;
    }
  }
  return out;
}

// Coarse-to-fine warm start: c-transform the coarse column potential onto the
// fine problem, then tighten the row side, producing a dual-feasible starting
// potential (slack >= 0 entrywise).
inline Vec warm_start_coarse_to_fine(const Mat& /*Y_coarse*/, const Mat& Z_coarse,
                                     const Vec& nu_coarse, const Mat& Y_fine,
                                     const Mat& Z_fine) {
  const int nc = static_cast<int>(Z_coarse.rows());
  const int nf = static_cast<int>(Y_fine.rows());
  if (nu_coarse.size() != 2 * nc)
    throw std::invalid_argument("warm_start: coarse potential size mismatch");
  Vec nu(2 * nf);
  for (int j = 0; j < nf; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < nc; ++k)
      best = std::min(best, (Y_fine.row(j) - Z_coarse.row(k)).squaredNorm() - nu_coarse[nc + k]);
    nu[j] = best;
  }
  for (int k = 0; k < nf; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < nf; ++j)
      best = std::min(best, (Y_fine.row(j) - Z_fine.row(k)).squaredNorm() - nu[j]);
    nu[nf + k] = best;
  }
  return nu;
}

}  // namespace otb
