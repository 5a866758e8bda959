#include "otb/registration.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace otb;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<int> argmax_rows(const TransportPlan& p) {
  std::vector<int> out(p.n, -1);
  const Mat X = p.to_dense_matrix();
  for (int i = 0; i < p.n; ++i) {
    int arg = 0;
    for (int j = 1; j < p.n; ++j)
      if (X(i, j) > X(i, arg)) arg = j;
    out[i] = arg;
  }
  return out;
}

Mat centered_cloud(int n, int d, unsigned seed) {
  Mat Y = oracle::random_cloud(n, d, seed);
  Y.rowwise() -= Y.colwise().mean();
  return Y;
}

double objective_F(const Mat& Y, const Mat& Z, const Mat& Q, const TransportPlan& x,
                   double eta) {
  const Mat cost = l2_cost(Y, Z * Q.transpose());
  return x.dot_cost(cost) + eta * (Q - Mat::Identity(Q.rows(), Q.cols())).squaredNorm();
}

}  // namespace

TEST_CASE("svd_update recovers identity and known rotations") {
  const int n = 30, d = 3;
  const Mat Y = centered_cloud(n, d, 11);
  TransportPlan identity_plan = TransportPlan::permutation(n, [&] {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    return p;
  }());

  // Z = Y: the cross-moment is symmetric PSD, so Q = I
  Mat Q = svd_update(Y, Y, identity_plan, 0.0);
  CHECK((Q - Mat::Identity(d, d)).norm() < 1e-10);

  // Z = R Y recovers Q = R^T exactly
  const Mat R = oracle::random_rotation(d, 5);
  const Mat Z = Y * R.transpose();
  Q = svd_update(Y, Z, identity_plan, 0.0);
  CHECK((Q - R.transpose()).norm() < 1e-8);
  CHECK((Y - Z * Q.transpose()).cwiseAbs().maxCoeff() < 1e-8);

  // a dominant regularizer pins Q at the identity
  Q = svd_update(Y, Z, identity_plan, 1e12);
  CHECK((Q - Mat::Identity(d, d)).norm() < 1e-6);
}

TEST_CASE("every returned transform is orthogonal") {
  const int n = 25, d = 3;
  const Mat Y = centered_cloud(n, d, 21);
  const Mat R = oracle::random_rotation(d, 22);
  RegistrationConfig cfg;
  cfg.outer_budget = 6;
  RegistrationResult res = register_rigid(Y, Y * R.transpose(), cfg);
  CHECK((res.transform.Q.transpose() * res.transform.Q - Mat::Identity(d, d)).norm() < 1e-10);
}

TEST_CASE("svd half-step never increases the objective") {
  const int n = 12, d = 3;
  const Mat Y = centered_cloud(n, d, 31);
  const Mat Z = centered_cloud(n, d, 32);
  const Vec xvals = oracle::random_interior_plan(n, 33);
  const TransportPlan x = TransportPlan::dense(n, xvals);
  const double eta = 1e-3;
  const Mat Q0 = Mat::Identity(d, d);
  const Mat Q1 = svd_update(Y, Z, x, eta);
  CHECK(objective_F(Y, Z, Q1, x, eta) <= objective_F(Y, Z, Q0, x, eta) + 1e-10);
}

TEST_CASE("identical clouds register immediately") {
  const int n = 20, d = 3;
  const Mat Y = centered_cloud(n, d, 44);
  RegistrationResult res = register_rigid(Y, Y);
  CHECK(res.report.converged);
  CHECK(res.report.iterations == 1);
  CHECK(res.report.error < 1e-10);
  CHECK((res.transform.Q - Mat::Identity(d, d)).norm() < 1e-10);
}

TEST_CASE("register_rigid recovers a synthetic rotation") {
  const int n = 100, d = 3;
  const Mat Y = centered_cloud(n, d, 55);
  const Mat R = oracle::random_rotation_bounded(56, 1.0);
  const Mat Z = Y * R.transpose();  // z_i = R y_i
  RegistrationConfig cfg;
  cfg.transport.early_termination_min_t = 10.0;
  RegistrationResult res = register_rigid(Y, Z, cfg);
  CHECK(res.report.converged);
  CHECK(res.report.error <= 1e-4);

  // error = 0 iff y_i = Q z_j wherever x_ij > 0
  const Mat Zq = Z * res.transform.Q.transpose();
  const Mat X = res.plan.to_dense_matrix();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (X(i, j) > 1e-9)
        CHECK((Y.row(i) - Zq.row(j)).norm() < 1e-3);
}

TEST_CASE("entropic registration with full support matches the dense alternation") {
  const int n = 16, d = 3;
  const Mat Y = centered_cloud(n, d, 66);
  const Mat R = oracle::random_rotation_bounded(67, 1.0);
  const Mat Z = Y * R.transpose();

  RegistrationConfig dense_cfg;
  dense_cfg.transport.early_termination_min_t = 10.0;
  dense_cfg.error_target = 1e-7;  // tight enough to compare the limits
  dense_cfg.transport.schedule.t_max = 1e9;
  RegistrationResult dense = register_rigid(Y, Z, dense_cfg);

  RegistrationConfig sparse_cfg = dense_cfg;
  sparse_cfg.k = n;  // full support
  RegistrationResult sparse = register_rigid_entropic(Y, Z, sparse_cfg);

  REQUIRE(dense.report.converged);
  REQUIRE(sparse.report.converged);
  CHECK_THAT(sparse.report.error, WithinAbs(dense.report.error, 1e-6));
}

TEST_CASE("entropic registration respects the support bound and recovers the map") {
  const int n = 120, d = 3, k = 8;
  const Mat Y = centered_cloud(n, d, 70);
  const Mat R = oracle::random_rotation_bounded(71, 1.0);
  const Mat Z = Y * R.transpose();
  RegistrationConfig cfg;
  cfg.k = k;
  cfg.xi_max = 3;
  RegistrationResult res = register_rigid_entropic(Y, Z, cfg);
  REQUIRE(res.report.converged);
  CHECK(res.report.error <= 1e-4);
  for (const auto& row : res.report.trace)
    CHECK(row.support_size <= static_cast<std::size_t>((4 * k + 1) * n));

  // ground-truth correspondence is the identity permutation
  auto match = argmax_rows(res.plan);
  for (int i = 0; i < n; ++i) CHECK(match[i] == i);
}

TEST_CASE("warm starts are dual feasible and below the optimal dual value") {
  const int nc = 40, nf = 80, d = 3;
  const Mat Yf = centered_cloud(nf, d, 80);
  const Mat R = oracle::random_rotation(d, 81);
  const Mat Zf = Yf * R.transpose();
  const Mat Yc = Yf.topRows(nc);
  const Mat Zc = Zf.topRows(nc);

  // coarse potentials from a converged entropic solve
  SolveConfig cfg;
  cfg.schedule = {1.0, 1.5, 1e5};
  cfg.early_termination = false;
  cfg.gap_tol = 1e-6;
  cfg.gap_tol_relative = false;
  SolveResult coarse = snne_solve(l2_cost(Yc, Zc), cfg);

  const Vec nu = warm_start_coarse_to_fine(Yc, Zc, coarse.nu, Yf, Zf);
  const Mat Cf = l2_cost(Yf, Zf);
  double min_slack = std::numeric_limits<double>::infinity();
  for (int i = 0; i < nf; ++i)
    for (int j = 0; j < nf; ++j)
      min_slack = std::min(min_slack, Cf(i, j) - nu[i] - nu[nf + j]);
  CHECK(min_slack >= -1e-10);

  auto [perm, opt] = oracle::hungarian(Cf);
  CHECK(nu.sum() <= opt + 1e-9);
}

TEST_CASE("warm starting reduces the first-t balancing iterations") {
  const int nc = 30, nf = 60, d = 3;
  const Mat Yf = centered_cloud(nf, d, 90);
  const Mat R = oracle::random_rotation(d, 91);
  const Mat Zf = Yf * R.transpose();
  const Mat Yc = Yf.topRows(nc);
  const Mat Zc = Zf.topRows(nc);

  SolveConfig cfg;
  cfg.schedule = {1.0, 1.5, 1e4};
  cfg.early_termination = false;
  cfg.gap_tol = 1e-7;
  cfg.gap_tol_relative = false;
  SolveResult coarse = snne_solve(l2_cost(Yc, Zc), cfg);
  const Vec nu0 = warm_start_coarse_to_fine(Yc, Zc, coarse.nu, Yf, Zf);

  // paired run at the first t from the zero potential vs the warm start
  const Mat Cf = l2_cost(Yf, Zf);
  const double t0 = 20.0;
  BalanceConfig bcfg;
  bcfg.tol = 1e-5 * std::sqrt(static_cast<double>(nf));
  bcfg.cold_prime = false;

  BalancerState cold = BalancerState::init(nf, t0);
  BalanceReport cold_rep = ne_balance(cold, Cf, bcfg);
  const int cold_iters = cold_rep.converged ? cold_rep.iterations : 300;

  BalancerState warm = BalancerState::init(nf, t0);
  warm.nu = nu0;
  BalanceReport warm_rep = ne_balance(warm, Cf, bcfg);

  REQUIRE(warm_rep.converged);
  CHECK(warm_rep.iterations < cold_iters);
}

TEST_CASE("coarse equal to fine reproduces a feasible potential") {
  const int n = 25, d = 3;
  const Mat Y = centered_cloud(n, d, 95);
  const Mat Z = centered_cloud(n, d, 96);
  const Mat C = l2_cost(Y, Z);
  SolveConfig cfg;
  cfg.schedule = {1.0, 1.5, 1e5};
  cfg.early_termination = false;
  cfg.gap_tol = 1e-8;
  cfg.gap_tol_relative = false;
  SolveResult sol = snne_solve(C, cfg);

  const Vec nu = warm_start_coarse_to_fine(Y, Z, sol.nu, Y, Z);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) CHECK(C(i, j) - nu[i] - nu[n + j] >= -1e-9);
  CHECK(nu.sum() <= sol.plan.dot_cost(C) + 1e-6);
}

TEST_CASE("mismatched cardinalities are rejected") {
  const Mat Y = centered_cloud(10, 3, 97);
  const Mat Z = centered_cloud(11, 3, 98);
  CHECK_THROWS_AS(register_rigid(Y, Z), std::invalid_argument);
}
