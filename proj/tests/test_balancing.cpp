#include "otb/balancing.hpp"
#include "otb/magic.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace otb;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Mat cost_of(const Mat& A) {  // cost with exp(-cost) = A at t = 1
  return -A.array().log().matrix();
}

double plan_max_diff(const TransportPlan& a, const Mat& b) {
  return (a.to_dense_matrix() - b).cwiseAbs().maxCoeff();
}

double gmn_of(const BalancerState& s) {
  const int n = s.n;
  const Vec w = s.t * s.nu;
  auto l2 = [&](const Vec& v) {
    const double m = v.maxCoeff();
    double acc = 0;
    for (int i = 0; i < v.size(); ++i) acc += std::exp(2 * (v[i] - m));
    return m + 0.5 * std::log(acc);
  };
  return std::exp(0.5 * (l2(w.head(n)) + l2(w.tail(n))));
}

}  // namespace

TEST_CASE("balanced_matrix evaluates the scaled kernel") {
  BalancerState s = BalancerState::init(2, 1.0);
  const Mat zero = Mat::Zero(2, 2);
  TransportPlan p = balanced_matrix(s, zero);
  CHECK(plan_max_diff(p, Mat::Ones(2, 2)) == 0.0);

  // support mask zeroes excluded entries exactly
  BalancerState sm = BalancerState::init(3, 1.0, totalize(3, {}));
  TransportPlan pm = balanced_matrix(sm, Mat::Zero(3, 3));
  CHECK(pm.entry(0, 1) == 0.0);
  CHECK(pm.entry(1, 1) == 1.0);
}

TEST_CASE("balance_error is the l1 marginal deviation") {
  TransportPlan ds = TransportPlan::uniform(4);
  CHECK(balance_error(ds) < 1e-14);

  Vec x(4);
  x << 1, 2, 3, 4;
  CHECK_THAT(balance_error(TransportPlan::dense(2, x)), WithinAbs(16.0, 1e-13));
}

TEST_CASE("sk converges in one sweep on a balanced input") {
  const Mat A = Mat::Constant(4, 4, 0.25);
  BalancerState s = BalancerState::init(4, 1.0);
  BalanceConfig cfg;
  cfg.tol = 1e-12;
  BalanceReport rep = sk_balance(s, cost_of(A), cfg);
  CHECK(rep.converged);
  CHECK(rep.iterations == 1);
  CHECK(s.nu.cwiseAbs().maxCoeff() < 1e-12);  // unchanged up to gauge
}

TEST_CASE("balancing the near-degenerate 2x2 matches the closed form") {
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    Mat A(2, 2);
    A << 1, eps, 1, 1;
    const double r = std::sqrt(eps);
    Mat expect(2, 2);
    expect << 1, r, r, 1;
    expect /= (1 + r);

    BalancerState s = BalancerState::init(2, 1.0);
    BalanceConfig cfg;
    cfg.tol = 1e-13;
    BalanceReport rep = ne_balance(s, cost_of(A), cfg);
    CHECK(rep.converged);
    CHECK(plan_max_diff(balanced_matrix(s, cost_of(A)), expect) < 1e-8);

    // scaling-entry ratio grows like eps^{-1/2}
    const Vec zeta2 = (s.t * s.nu.tail(2)).array().exp();
    const double ratio = zeta2.maxCoeff() / zeta2.minCoeff();
    CHECK(ratio * r > 0.5);
    CHECK(ratio * r < 2.0);
  }
}

TEST_CASE("cold sinkhorn stalls on the hard magic(50) instance") {
  const Mat C = magic_square(50);
  BalanceConfig ncfg;
  ncfg.tol = 1e-5;
  ncfg.record_trace = false;
  auto ladder = stabilized_path(C, {1.0 / 160, 1.0 / 80, 1.0 / 40, 1.0 / 20},
                                BalanceMethod::KR, ncfg);
  REQUIRE(ladder.back().report.converged);
  const int newton_budget = ladder.back().report.iterations;

  BalancerState s = BalancerState::init(50, 1.0 / 20);
  BalanceConfig cfg;
  cfg.tol = 1e-5;
  cfg.max_iter = 10 * newton_budget;
  BalanceReport rep = sk_balance(s, C, cfg);
  CHECK_FALSE(rep.converged);
  CHECK(rep.error > 1e-2);
}

TEST_CASE("kr reproduces the long-run sinkhorn limit") {
  const Mat A = oracle::random_positive(2, 91);
  const Mat ref = oracle::sk_reference(A, 60000);
  BalancerState s = BalancerState::init(2, 1.0);
  BalanceConfig cfg;
  cfg.tol = 1e-13;
  BalanceReport rep = kr_balance(s, cost_of(A), cfg);
  CHECK(rep.converged);
  CHECK(plan_max_diff(balanced_matrix(s, cost_of(A)), ref) < 1e-10);
}

TEST_CASE("kr geometric mean norms match the independent sinkhorn oracle") {
  const Mat C = magic_square(20) / 20.0;
  BalancerState s = BalancerState::init(20, 1.0);
  BalanceConfig cfg;
  cfg.tol = 1e-10;
  BalanceReport rep = kr_balance(s, C, cfg);
  CHECK(rep.converged);

  auto [z1, z2] = oracle::sk_reference_scalings((-C.array()).exp().matrix(), 4000);
  const double ref = std::sqrt(z1.norm() * z2.norm());
  CHECK_THAT(rep.geometric_mean_norm, WithinRel(ref, 1e-6));
}

TEST_CASE("ne exits immediately on a doubly stochastic input") {
  const Mat A = Mat::Constant(3, 3, 1.0 / 3);
  BalancerState s = BalancerState::init(3, 1.0);
  BalanceConfig cfg;
  cfg.tol = 1e-10;
  BalanceReport rep = ne_balance(s, cost_of(A), cfg);
  CHECK(rep.converged);
  CHECK(rep.iterations == 0);
  CHECK(s.nu.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ne matches the long-run sinkhorn limit on random input") {
  const Mat A = oracle::random_positive(3, 17);
  const Mat ref = oracle::sk_reference(A, 60000);
  BalancerState s = BalancerState::init(3, 1.0);
  BalanceConfig cfg;
  cfg.tol = 1e-13;
  BalanceReport rep = ne_balance(s, cost_of(A), cfg);
  CHECK(rep.converged);
  CHECK(plan_max_diff(balanced_matrix(s, cost_of(A)), ref) < 1e-10);
}

TEST_CASE("ne converges on magic(50) at t = 1/160") {
  const Mat C = magic_square(50);
  BalancerState s = BalancerState::init(50, 1.0 / 160);
  BalanceConfig cfg;
  cfg.tol = 1e-5;
  BalanceReport rep = ne_balance(s, C, cfg);
  CHECK(rep.converged);
}

TEST_CASE("lb step direction is a strict descent direction") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const Mat A = oracle::random_positive(4, 500 + trial);
    BalancerState s = BalancerState::init(4, 1.0);
    // one newton step from a random potential
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& t : s.nu.reshaped()) t = u(rng);
    const Mat C = cost_of(A);

    // dense oracle for the modified Newton direction
    TransportPlan B = balanced_matrix(s, C);
    Vec g(8);
    g.head(4) = B.row_marginals.array() - 1.0;
    g.tail(4) = B.col_marginals.array() - 1.0;
    if (g.norm() < 1e-12) continue;
    Mat H(8, 8);
    H.setZero();
    H.topLeftCorner(4, 4) = B.row_marginals.asDiagonal();
    H.bottomRightCorner(4, 4) = B.col_marginals.asDiagonal();
    H.topRightCorner(4, 4) = B.to_dense_matrix();
    H.bottomLeftCorner(4, 4) = B.to_dense_matrix().transpose();
    const Vec y = oracle::pinv_solve(H, g);
    // directional derivative of g along u = -zeta .* y is -<g, y> < 0
    CHECK(g.dot(y) > 0);
  }
}

TEST_CASE("lb objective is gauge invariant") {
  const Mat A = oracle::random_positive(4, 71);
  const Mat C = cost_of(A);
  BalancerState s = BalancerState::init(4, 1.0);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& t : s.nu.reshaped()) t = u(rng);

  auto objective = [&](const BalancerState& st) {
    const TransportPlan p = balanced_matrix(st, C);
    return p.values.sum() - st.t * st.nu.sum();
  };
  const double base = objective(s);
  for (double shift : {-1.3, 0.4, 2.0}) {
    BalancerState sh = s;
    sh.nu.head(4).array() += shift;
    sh.nu.tail(4).array() -= shift;
    CHECK_THAT(objective(sh), WithinRel(base, 1e-12));
  }
}

TEST_CASE("one kr step equals one lb step with unit step size") {
  const Mat A = oracle::random_positive(5, 123);
  const Mat C = cost_of(A);
  // move near the solution so the unit step is acceptable to the line search
  BalancerState warm = BalancerState::init(5, 1.0);
  BalanceConfig pre;
  pre.tol = 1e-2;
  ne_balance(warm, C, pre);

  BalancerState a = warm, b = warm;
  BalanceConfig one;
  one.tol = 1e-15;
  one.max_iter = 1;
  kr_balance(a, C, one);
  lb_balance(b, C, one);
  CHECK((a.nu - b.nu).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("all four balancers agree on the balanced matrix") {
  for (int n : {3, 5, 6}) {
    const Mat A = oracle::random_positive(n, 1000 + n);
    const Mat C = cost_of(A);
    BalanceConfig cfg;
    cfg.tol = 1e-11;
    Mat results[4];
    int idx = 0;
    for (auto m : {BalanceMethod::SK, BalanceMethod::KR, BalanceMethod::NE, BalanceMethod::LB}) {
      BalancerState s = BalancerState::init(n, 1.0);
      BalanceReport rep = balance(m, s, C, cfg);
      REQUIRE(rep.converged);
      results[idx++] = balanced_matrix(s, C).to_dense_matrix();
    }
    for (int i = 1; i < 4; ++i)
      CHECK((results[i] - results[0]).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("newton balancers decrease the objective at every accepted step") {
  const Mat A = oracle::random_positive(6, 202);
  const Mat C = cost_of(A);
  for (auto m : {BalanceMethod::NE, BalanceMethod::LB}) {
    BalancerState s = BalancerState::init(6, 1.0);
    BalanceConfig cfg;
    cfg.tol = 1e-12;
    BalanceReport rep = balance(m, s, C, cfg);
    REQUIRE(rep.converged);
    for (std::size_t i = 1; i < rep.trace.size(); ++i)
      CHECK(rep.trace[i].objective <= rep.trace[i - 1].objective + 1e-12);
  }
}

TEST_CASE("sk decreases the barrier objective per sweep") {
  const Mat A = oracle::random_positive(5, 303);
  const Mat C = cost_of(A);
  double prev = std::numeric_limits<double>::infinity();
  for (int sweeps = 1; sweeps <= 8; ++sweeps) {
    BalancerState s = BalancerState::init(5, 1.0);
    BalanceConfig cfg;
    cfg.tol = 1e-16;
    cfg.max_iter = sweeps;
    sk_balance(s, C, cfg);
    const TransportPlan p = balanced_matrix(s, C);
    const double obj = p.values.sum() - s.t * s.nu.sum();
    CHECK(obj <= prev + 1e-12);
    prev = obj;
  }
}

TEST_CASE("the balancing Hessian is PSD with the expected null space") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (int n : {3, 4, 5}) {
    // masked kernel with a nontrivial pattern
    SupportSet sup = totalize(n, {{0, n - 1}, {n - 1, 0}});
    BalancerState s = BalancerState::init(n, 1.0, sup);
    for (auto& t : s.nu.reshaped()) t = u(rng);
    const Mat C = Mat::Zero(n, n);
    TransportPlan B = balanced_matrix(s, C);

    Mat H = Mat::Zero(2 * n, 2 * n);
    H.topLeftCorner(n, n) = B.row_marginals.asDiagonal();
    H.bottomRightCorner(n, n) = B.col_marginals.asDiagonal();
    H.topRightCorner(n, n) = B.to_dense_matrix();
    H.bottomLeftCorner(n, n) = B.to_dense_matrix().transpose();

    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    CHECK(es.eigenvalues().minCoeff() > -1e-10 * es.eigenvalues().maxCoeff());
    // null vectors satisfy w1_i + w2_j = 0 on the support
    for (int k = 0; k < 2 * n; ++k) {
      if (std::abs(es.eigenvalues()[k]) > 1e-10 * es.eigenvalues().maxCoeff()) continue;
      const Vec w = es.eigenvectors().col(k);
      for (auto [i, j] : sup.pairs())
        CHECK(std::abs(w[i] + w[n + j]) < 1e-8);
    }
  }
}

TEST_CASE("converged scaling products respect the sublevel bounds") {
  for (unsigned seed : {11u, 12u, 13u}) {
    const Mat A = oracle::random_positive(4, seed, 0.2, 1.0);
    const Mat C = cost_of(A);
    const double c0 = A.sum();  // objective at zeta = 1
    const double delta = A.minCoeff();
    BalancerState s = BalancerState::init(4, 1.0);
    BalanceConfig cfg;
    cfg.tol = 1e-12;
    BalanceReport rep = lb_balance(s, C, cfg);
    REQUIRE(rep.converged);
    const double lower = std::exp(-c0 + 3 * (1 + std::log(delta)));
    const double upper = std::max((c0 - 3 * (1 + std::log(delta))) / delta, 1.0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double prod = std::exp(s.nu[i] + s.nu[4 + j]);
        CHECK(prod >= lower * (1 - 1e-9));
        CHECK(prod <= upper * (1 + 1e-9));
      }
  }
}

TEST_CASE("single-step stabilized path equals direct balancing") {
  const Mat C = magic_square(5);
  BalanceConfig cfg;
  cfg.tol = 1e-10;
  auto pts = stabilized_path(C, std::vector<double>{0.125}, BalanceMethod::NE, cfg);
  REQUIRE(pts.size() == 1);
  BalancerState direct = BalancerState::init(5, 0.125);
  ne_balance(direct, C, cfg);
  CHECK((pts[0].state.nu - direct.nu).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stabilized path reproduces the hard-instance norm ladder") {
  const Mat C = magic_square(50);
  const std::vector<double> ts{1.0 / 160, 1.0 / 80, 1.0 / 40, 1.0 / 20};
  const std::vector<double> expect{2.31e1, 8.05e2, 1.61e6, 1.08e13};
  BalanceConfig cfg;
  cfg.tol = 1e-5;
  auto pts = stabilized_path(C, ts, BalanceMethod::NE, cfg);
  REQUIRE(pts.size() == 4);
  for (int k = 0; k < 4; ++k) {
    REQUIRE(pts[k].report.converged);
    CHECK_THAT(pts[k].report.log10_geometric_mean_norm,
               WithinRel(std::log10(expect[k]), 0.02));
  }
}

TEST_CASE("warm starts reduce the iteration count at the final t") {
  const Mat C = magic_square(50);
  BalanceConfig cfg;
  cfg.tol = 1e-5;
  auto pts = stabilized_path(C, {1.0 / 160, 1.0 / 80, 1.0 / 40, 1.0 / 20}, BalanceMethod::NE, cfg);
  REQUIRE(pts.back().report.converged);

  BalancerState cold = BalancerState::init(50, 1.0 / 20);
  BalanceReport cold_rep = ne_balance(cold, C, cfg);
  CHECK(pts.back().report.iterations < cold_rep.iterations);
}

TEST_CASE("reports are invariant under the gauge shift") {
  const Mat A = oracle::random_positive(4, 88);
  const Mat C = cost_of(A);
  BalancerState s = BalancerState::init(4, 1.0);
  BalanceConfig cfg;
  cfg.tol = 1e-11;
  kr_balance(s, C, cfg);

  BalancerState shifted = s;
  shifted.nu.head(4).array() += 0.7;
  shifted.nu.tail(4).array() -= 0.7;
  CHECK_THAT(balance_error(balanced_matrix(shifted, C)),
             WithinAbs(balance_error(balanced_matrix(s, C)), 1e-12));
  CHECK_THAT(gmn_of(shifted), WithinRel(gmn_of(s), 1e-10));
}

TEST_CASE("masked balancing rejects empty rows and missing support") {
  SupportSet bad = SupportSet::from_pairs(3, {{0, 0}, {1, 0}, {2, 0}});  // cols 1,2 empty
  BalancerState s = BalancerState::init(3, 1.0, bad);
  CHECK_THROWS_AS(sk_balance(s, Mat::Zero(3, 3)), std::invalid_argument);
}
