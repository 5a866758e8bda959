#pragma once

#include "otb/core.hpp"

#include <cmath>
#include <stdexcept>

namespace otb {

struct CgConfig {
  double tol = 1e-10;   // relative residual
  int max_iter = 0;     // 0: 8 * dimension
  double eps_reg = 0.0; // diagonal shift added to the operator
};

struct CgResult {
  Vec x;
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
  bool breakdown = false;  // non-finite values or lost curvature; x is the best iterate
};

// Preconditioned CG for a symmetric positive semidefinite operator.
// The right-hand side (and then every iterate) is projected orthogonal to
// null_dir when given, which turns the pseudo-inverse solve of a consistent
// singular system into a plain CG run. jacobi, when given, is the operator
// diagonal used as preconditioner.
//
// On a near-singular system the iteration can diverge; the solver then keeps
// the lowest-residual iterate seen so far and reports breakdown instead of
// propagating non-finite values. A NaN right-hand side is a caller error.
template <class Op>
CgResult cg_solve(Op&& apply, const Vec& rhs, const CgConfig& cfg = {},
                  const Vec* jacobi = nullptr, const Vec* null_dir = nullptr) {
  if (!rhs.allFinite()) throw std::invalid_argument("cg_solve: non-finite right-hand side");
  const Eigen::Index m = rhs.size();
  const int max_iter = cfg.max_iter > 0 ? cfg.max_iter : static_cast<int>(8 * m);

  Vec nd;
  if (null_dir) {
    nd = *null_dir;
    const double nn = nd.norm();
    if (nn > 0) nd /= nn;
  }
  auto project = [&](Vec& v) {
    if (null_dir) v -= nd.dot(v) * nd;
  };

  Vec minv;
  if (jacobi) {
    // clamp tiny diagonal entries so the preconditioner does not amplify
    // near-null directions of a degenerate system
    const double dmax = jacobi->maxCoeff() + cfg.eps_reg;
    const double floor = std::max(1e-8 * dmax, 1e-300);
    minv = Vec::Ones(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double d = (*jacobi)[i] + cfg.eps_reg;
      minv[i] = 1.0 / std::max(d, floor);
    }
  }

  CgResult res;
  res.x = Vec::Zero(m);
  Vec b = rhs;
  project(b);
  const double nb = b.norm();
  if (nb == 0) {
    res.converged = true;
    return res;
  }

  Vec x = Vec::Zero(m);
  Vec best_x = x;
  double best_res = 1.0;

  Vec r = b;
  Vec z = jacobi ? Vec(minv.cwiseProduct(r)) : r;
  project(z);
  Vec p = z;
  double rz = r.dot(z);
  for (int k = 0; k < max_iter; ++k) {
    Vec hp = apply(p);
    if (cfg.eps_reg > 0) hp += cfg.eps_reg * p;
    const double php = p.dot(hp);
    if (!std::isfinite(php) || php <= 0) {
      res.breakdown = true;
      break;
    }
    const double alpha = rz / php;
    x += alpha * p;
    r -= alpha * hp;
    res.iterations = k + 1;
    const double rel = r.norm() / nb;
    if (!std::isfinite(rel)) {
      res.breakdown = true;
      break;
    }
    if (rel < best_res) {
      best_res = rel;
      best_x = x;
    }
    if (rel <= cfg.tol) {
      res.converged = true;
      break;
    }
    if (rel > 1e8) {  // hopeless divergence
      res.breakdown = true;
      break;
    }
    z = jacobi ? Vec(minv.cwiseProduct(r)) : r;
    project(z);
    const double rz_new = r.dot(z);
    if (!std::isfinite(rz_new) || rz_new <= 0) {
      res.breakdown = true;
      break;
    }
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  res.x = best_x;
  res.rel_residual = best_res;
  project(res.x);
  return res;
}

}  // namespace otb
