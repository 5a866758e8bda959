// otb: matrix balancing, optimal transport, and rigid registration CLI.
//
// Exit codes: 0 success/converged, 1 non-convergence, 2 input error.

#include "otb/io.hpp"
#include "otb/magic.hpp"
#include "otb/otb.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdlib>
#include <iostream>
#include <random>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 1;
constexpr int kExitInputError = 2;

struct CommonOpts {
  std::string input;
  int magic_n = 0;
  double scale = 1.0;
  int random_n = 0;
  unsigned seed = 1;
  std::string report_path, trace_path;
  bool timings = false;
};

otb::Mat load_cost(const CommonOpts& o) {
  if (!o.input.empty()) return otb::io::read_matrix(o.input) * o.scale;
  if (o.magic_n > 0) return otb::magic_square(o.magic_n) * o.scale;
  if (o.random_n > 0) {
    std::mt19937 rng(o.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    otb::Mat C(o.random_n, o.random_n);
    for (int i = 0; i < o.random_n; ++i)
      for (int j = 0; j < o.random_n; ++j) C(i, j) = u(rng);
    return C * o.scale;
  }
  throw std::runtime_error("no input: give --input, --magic, or --random-cost");
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--input", o.input, "matrix file (.csv dense or .coo triples)");
  cmd->add_option("--magic", o.magic_n, "use the n-by-n magic square as cost");
  cmd->add_option("--random-cost", o.random_n, "random uniform cost of side n (uses --seed)");
  cmd->add_option("--scale", o.scale, "multiply the cost by this factor");
  cmd->add_option("--seed", o.seed, "seed for synthetic inputs");
  cmd->add_option("--report", o.report_path, "write the JSON report here");
  cmd->add_option("--trace", o.trace_path, "write the iteration trace CSV here");
  cmd->add_flag("--timings", o.timings,
                "record wall-clock columns in traces (off keeps outputs deterministic)");
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* th = std::getenv("OTB_THREADS")) Eigen::setNbThreads(std::atoi(th));

  CLI::App app{"matrix-balancing interior point solvers for optimal transport"};
  app.require_subcommand(1);

  // ---- magic ----------------------------------------------------------
  auto* cmd_magic = app.add_subcommand("magic", "emit a magic square as CSV");
  int magic_n = 3;
  std::string magic_out;
  cmd_magic->add_option("--n", magic_n, "side length (>= 3)")->required();
  cmd_magic->add_option("--out", magic_out, "output file (default stdout)");

  // ---- balance --------------------------------------------------------
  auto* cmd_balance = app.add_subcommand("balance", "balance exp(-t*C) to doubly stochastic");
  CommonOpts bo;
  add_common(cmd_balance, bo);
  std::string b_method = "kr";
  double b_t = 1.0, b_tol = 1e-8;
  int b_maxit = 0;
  std::string b_path;  // comma separated t ladder
  cmd_balance->add_option("--method", b_method, "sk|kr|ne|lb");
  cmd_balance->add_option("--t", b_t, "inverse temperature (matrix is exp(-t*C))");
  cmd_balance->add_option("--tol", b_tol, "l1 balancing error target");
  cmd_balance->add_option("--max-iter", b_maxit, "iteration budget (0: per-method default)");
  cmd_balance->add_option("--t-path", b_path,
                          "comma-separated increasing t values for a stabilized warm-started run");

  // ---- transport ------------------------------------------------------
  auto* cmd_tp = app.add_subcommand("transport", "solve optimal transport for a cost matrix");
  CommonOpts to;
  add_common(cmd_tp, to);
  std::string tp_method = "ne", tp_algo = "snne";
  double tp_t0 = 1.0, tp_eta = 1.5, tp_tmax = 1e7;
  double tp_reltol = 0.0, tp_abstol = 0.0, tp_mbtol = 0.0;
  double tp_ref = std::numeric_limits<double>::quiet_NaN();
  bool tp_sparse = false;
  int tp_k = 20, tp_ximax = 3;
  double tp_eps = 0.0;
  std::string tp_plan_out;
  double tp_plan_threshold = 1e-9;
  std::string tp_support_out;
  cmd_tp->add_option("--method", tp_method, "balancing method sk|kr|ne|lb");
  cmd_tp->add_option("--algo", tp_algo, "snne|ipmb (snne-sparse via --sparse)");
  cmd_tp->add_option("--t0", tp_t0, "schedule start");
  cmd_tp->add_option("--eta", tp_eta, "schedule factor (> 1)");
  cmd_tp->add_option("--tmax", tp_tmax, "schedule cap");
  cmd_tp->add_option("--reltol", tp_reltol, "relative duality gap target");
  cmd_tp->add_option("--abstol", tp_abstol, "absolute duality gap target");
  cmd_tp->add_option("--mb-tol", tp_mbtol, "balancing tolerance (default 1e-5*sqrt(n))");
  cmd_tp->add_option("--ref-optimum", tp_ref, "reference optimal value for relative gaps");
  cmd_tp->add_flag("--sparse", tp_sparse, "run SNNE-sparse with total-support truncation");
  cmd_tp->add_option("--k", tp_k, "sparse parameter: k smallest slacks per row");
  cmd_tp->add_option("--xi-max", tp_ximax, "support update rounds");
  cmd_tp->add_option("--epsilon", tp_eps, "threshold selection instead of k-smallest");
  cmd_tp->add_option("--plan-out", tp_plan_out, "write plan entries above threshold as .coo");
  cmd_tp->add_option("--plan-threshold", tp_plan_threshold, "plan emission threshold");
  cmd_tp->add_option("--support-out", tp_support_out, "write the final support set");

  // ---- register -------------------------------------------------------
  auto* cmd_reg = app.add_subcommand("register", "rigid registration of two point clouds");
  std::string reg_src, reg_dst, reg_report, reg_trace;
  bool reg_sparse = false, reg_timings = false;
  int reg_k = 20, reg_ximax = 3, reg_budget = 50;
  double reg_target = 1e-4, reg_eta = -1.0, reg_t0 = 1.0, reg_sched_eta = 1.5, reg_tmax = 1e7;
  std::string reg_method = "ne";
  cmd_reg->add_option("--source", reg_src,
                      "source cloud Y (re-centered to zero mean internally)")->required();
  cmd_reg->add_option("--target", reg_dst,
                      "target cloud Z; the rigid model has no translation, so clouds that\n"
                      "differ by a shift must be pre-centered by the caller")->required();
  cmd_reg->add_flag("--sparse", reg_sparse, "single-path entropic variant with sparse support");
  cmd_reg->add_option("--k", reg_k, "sparse parameter");
  cmd_reg->add_option("--xi-max", reg_ximax, "support update rounds per t");
  cmd_reg->add_option("--budget", reg_budget, "outer alternation budget");
  cmd_reg->add_option("--error-target", reg_target, "stop when <c(Q),x> falls below this");
  cmd_reg->add_option("--eta-reg", reg_eta, "SVD regularizer weight (default 1e-6*scale)");
  cmd_reg->add_option("--method", reg_method, "balancing method");
  cmd_reg->add_option("--t0", reg_t0, "schedule start");
  cmd_reg->add_option("--eta", reg_sched_eta, "schedule factor");
  cmd_reg->add_option("--tmax", reg_tmax, "schedule cap");
  cmd_reg->add_option("--report", reg_report, "JSON report path");
  cmd_reg->add_option("--trace", reg_trace, "trace CSV path");
  cmd_reg->add_flag("--timings", reg_timings, "record wall-clock columns in traces");

  // ---- repro ----------------------------------------------------------
  auto* cmd_repro = app.add_subcommand("repro", "regenerate the benchmark experiments");
  std::string repro_what = "table1";
  std::string repro_out = ".";
  int repro_scale = 0;
  cmd_repro->add_option("what", repro_what, "table1|table2|fig3")->required();
  cmd_repro->add_option("--outdir", repro_out, "directory for emitted CSV files");
  cmd_repro->add_option("--n", repro_scale, "override the instance side length");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_magic) {
      const otb::Mat M = otb::magic_square(magic_n);
      if (magic_out.empty()) {
        for (int i = 0; i < magic_n; ++i) {
          for (int j = 0; j < magic_n; ++j) std::cout << (j ? "," : "") << M(i, j);
          std::cout << "\n";
        }
      } else {
        otb::io::write_matrix_csv(magic_out, M);
      }
      return kExitOk;
    }

    if (*cmd_balance) {
      otb::Mat C;
      try {
        C = load_cost(bo);
      } catch (const std::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
      }
      const auto method = otb::balance_method_from(b_method);
      otb::BalanceConfig cfg;
      cfg.tol = b_tol;
      cfg.max_iter = b_maxit;

      otb::BalancerState state = otb::BalancerState::init(static_cast<int>(C.rows()), b_t);
      otb::BalanceReport rep;
      if (!b_path.empty()) {
        std::vector<double> ts;
        for (double v : otb::io::parse_numbers(b_path)) ts.push_back(v);
        auto pts = otb::stabilized_path(C, ts, method, cfg);
        state = pts.back().state;
        rep = pts.back().report;
        for (const auto& p : pts)
          std::cout << "t=" << p.t << " error=" << p.report.error
                    << " iters=" << p.report.iterations
                    << " geometric_mean_norm=" << p.report.geometric_mean_norm << "\n";
      } else {
        rep = otb::balance(method, state, C, cfg);
        std::cout << "error=" << rep.error << " iters=" << rep.iterations
                  << " geometric_mean_norm=" << rep.geometric_mean_norm
                  << " converged=" << (rep.converged ? "yes" : "no") << "\n";
      }
      if (!bo.report_path.empty())
        otb::io::write_json(bo.report_path, otb::io::balance_report_json(rep, state, method));
      if (!bo.trace_path.empty())
        otb::io::write_balance_trace_csv(bo.trace_path, rep, bo.timings);
      return rep.converged ? kExitOk : kExitNotConverged;
    }

    if (*cmd_tp) {
      otb::Mat C;
      try {
        C = load_cost(to);
      } catch (const std::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
      }
      otb::SolveConfig cfg;
      cfg.method = otb::balance_method_from(tp_method);
      cfg.schedule = {tp_t0, tp_eta, tp_tmax};
      if (tp_mbtol > 0) cfg.balance.tol = tp_mbtol;
      if (tp_reltol > 0) {
        cfg.gap_tol = tp_reltol;
        cfg.gap_tol_relative = true;
      } else if (tp_abstol > 0) {
        cfg.gap_tol = tp_abstol;
        cfg.gap_tol_relative = false;
      }
      if (!std::isnan(tp_ref)) cfg.reference_optimum = tp_ref;

      otb::SolveResult sol;
      if (tp_sparse) {
        otb::SparseSolveConfig scfg;
        scfg.k = tp_eps > 0 ? 0 : tp_k;
        scfg.eps = tp_eps;
        scfg.xi_max = tp_ximax;
        sol = otb::snne_sparse_solve(C, scfg, cfg);
      } else if (tp_algo == "ipmb") {
        sol = otb::ipmb_solve(C, cfg);
      } else {
        sol = otb::snne_solve(C, cfg);
      }
      std::cout << "termination=" << otb::to_string(sol.report.termination)
                << " gap=" << sol.report.duality_gap
                << " relative_gap=" << sol.report.relative_gap
                << " t_achieved=" << sol.report.t_achieved << "\n";
      if (!to.report_path.empty())
        otb::io::write_json(to.report_path, otb::io::solve_report_json(sol.report, to.timings));
      if (!to.trace_path.empty())
        otb::io::write_solve_trace_csv(to.trace_path, sol.report, to.timings);
      if (!tp_plan_out.empty()) otb::io::write_plan_coo(tp_plan_out, sol.plan, tp_plan_threshold);
      if (!tp_support_out.empty() && sol.plan.support)
        otb::io::write_support(tp_support_out, *sol.plan.support);
      return sol.report.termination == otb::Termination::budget_exhausted ? kExitNotConverged
                                                                          : kExitOk;
    }

    if (*cmd_reg) {
      otb::Mat Y, Z;
      try {
        Y = otb::io::read_point_cloud(reg_src);
        Z = otb::io::read_point_cloud(reg_dst);
        if (Y.rows() != Z.rows() || Y.cols() != Z.cols())
          throw std::runtime_error("point clouds must have equal cardinality and dimension");
      } catch (const std::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
      }
      otb::RegistrationConfig cfg;
      cfg.outer_budget = reg_budget;
      cfg.error_target = reg_target;
      cfg.regularizer_weight = reg_eta;
      cfg.k = reg_k;
      cfg.xi_max = reg_ximax;
      cfg.transport.method = otb::balance_method_from(reg_method);
      cfg.transport.schedule = {reg_t0, reg_sched_eta, reg_tmax};

      otb::RegistrationResult res = reg_sparse ? otb::register_rigid_entropic(Y, Z, cfg)
                                               : otb::register_rigid(Y, Z, cfg);
      std::cout << "error=" << res.report.error << " iterations=" << res.report.iterations
                << " converged=" << (res.report.converged ? "yes" : "no") << "\n";
      if (!reg_report.empty())
        otb::io::write_json(reg_report,
                            otb::io::registration_report_json(res.report, res.transform));
      if (!reg_trace.empty())
        otb::io::write_registration_trace_csv(reg_trace, res.report, reg_timings);
      return res.report.converged ? kExitOk : kExitNotConverged;
    }

    if (*cmd_repro) {
      const std::string dir = repro_out + "/";
      if (repro_what == "table1") {
        const int n = repro_scale > 0 ? repro_scale : 50;
        const otb::Mat C = otb::magic_square(n);
        const std::vector<double> ts{1.0 / 160, 1.0 / 80, 1.0 / 40, 1.0 / 20};
        for (auto m : {otb::BalanceMethod::NE, otb::BalanceMethod::LB, otb::BalanceMethod::KR,
                       otb::BalanceMethod::SK}) {
          otb::BalanceConfig cfg;
          cfg.tol = 1e-5;
          auto pts = otb::stabilized_path(C, ts, m, cfg);
          std::ofstream out(dir + "table1_" + otb::to_string(m) + ".csv");
          out << "t,iterations,error,geometric_mean_norm,log10_geometric_mean_norm\n";
          for (const auto& p : pts)
            out << p.t << "," << p.report.iterations << "," << p.report.error << ","
                << p.report.geometric_mean_norm << "," << p.report.log10_geometric_mean_norm
                << "\n";
          std::cout << "wrote table1_" << otb::to_string(m) << ".csv\n";
        }
        return kExitOk;
      }
      if (repro_what == "table2") {
        const int n = repro_scale > 0 ? repro_scale : 200;
        const otb::Mat C = otb::magic_square(n);
        for (auto m : {otb::BalanceMethod::NE, otb::BalanceMethod::LB, otb::BalanceMethod::KR,
                       otb::BalanceMethod::SK}) {
          otb::SolveConfig cfg;
          cfg.method = m;
          cfg.gap_tol = 1e-3;
          cfg.early_termination = false;
          otb::SolveResult sol = otb::snne_solve(C, cfg);
          otb::io::write_solve_trace_csv(dir + "table2_" + otb::to_string(m) + ".csv",
                                         sol.report, true);
          std::cout << "wrote table2_" << otb::to_string(m) << ".csv (termination="
                    << otb::to_string(sol.report.termination) << ")\n";
        }
        return kExitOk;
      }
      if (repro_what == "fig3") {
        const int n = repro_scale > 0 ? repro_scale : 20;
        const otb::Mat C = otb::magic_square(n) / 20.0;
        for (auto m : {otb::BalanceMethod::SK, otb::BalanceMethod::KR, otb::BalanceMethod::NE,
                       otb::BalanceMethod::LB}) {
          otb::BalancerState st = otb::BalancerState::init(n, 1.0);
          otb::BalanceConfig cfg;
          cfg.tol = 1e-10;
          cfg.max_iter = m == otb::BalanceMethod::SK ? 20000 : 200;
          auto rep = otb::balance(m, st, C, cfg);
          otb::io::write_balance_trace_csv(dir + "fig3_" + otb::to_string(m) + ".csv", rep, true);
          std::cout << "wrote fig3_" << otb::to_string(m) << ".csv\n";
        }
        return kExitOk;
      }
      std::cerr << "input error: unknown repro target " << repro_what << "\n";
      return kExitInputError;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNotConverged;
  }
  return kExitOk;
}
