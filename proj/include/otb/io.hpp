#pragma once

#include "otb/balancing.hpp"
#include "otb/ipm.hpp"
#include "otb/plan.hpp"
#include "otb/registration.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace otb::io {

using json = nlohmann::json;

inline std::vector<double> parse_numbers(const std::string& line) {
  std::string s = line;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream is(s);
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  return out;
}

// Dense matrix from CSV (comma or whitespace separated rows).
inline Mat read_dense_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    auto nums = parse_numbers(line);
    if (!nums.empty()) rows.push_back(std::move(nums));
  }
  if (rows.empty()) throw std::runtime_error("empty matrix file " + path);
  const std::size_t m = rows.size(), k = rows[0].size();
  for (const auto& r : rows)
    if (r.size() != k) throw std::runtime_error("ragged rows in " + path);
  Mat M(m, k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) M(i, j) = rows[i][j];
  return M;
}

// Coordinate triples "i j value", 1-based indices; matrix side is the
// largest index seen. Missing entries are zero.
inline Mat read_coo(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::tuple<int, int, double>> trip;
  int n = 0;
  int i, j;
  double v;
  while (in >> i >> j >> v) {
    if (i < 1 || j < 1) throw std::runtime_error("non-positive index in " + path);
    trip.emplace_back(i - 1, j - 1, v);
    n = std::max({n, i, j});
  }
  if (trip.empty()) throw std::runtime_error("empty coordinate file " + path);
  Mat M = Mat::Zero(n, n);
  for (auto [a, b, c] : trip) M(a, b) = c;
  return M;
}

// Auto-detect by extension: .coo -> triples, else dense CSV.
inline Mat read_matrix(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".coo") return read_coo(path);
  return read_dense_csv(path);
}

// Whitespace-separated point cloud, one point per line, d columns.
inline Mat read_point_cloud(const std::string& path) {
  Mat M = read_dense_csv(path);
  if (M.cols() != 2 && M.cols() != 3)
    throw std::runtime_error("point cloud must have 2 or 3 columns: " + path);
  return M;
}

inline void write_matrix_csv(const std::string& path, const Mat& M) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) out << (j ? "," : "") << M(i, j);
    out << "\n";
  }
}

// Sorted "i j" pairs, 1-based.
inline void write_support(const std::string& path, const SupportSet& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (auto [i, j] : s.pairs()) out << (i + 1) << " " << (j + 1) << "\n";
}

// Plan entries above threshold as "i j value", 1-based.
inline void write_plan_coo(const std::string& path, const TransportPlan& plan,
                           double threshold) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17);
  if (!plan.support) {
    for (int i = 0; i < plan.n; ++i)
      for (int j = 0; j < plan.n; ++j) {
        const double v = plan.values[static_cast<Eigen::Index>(i) * plan.n + j];
        if (v > threshold) out << (i + 1) << " " << (j + 1) << " " << v << "\n";
      }
  } else {
    for (int i = 0; i < plan.n; ++i)
      for (int k = plan.support->row_ptr[i]; k < plan.support->row_ptr[i + 1]; ++k)
        if (plan.values[k] > threshold)
          out << (i + 1) << " " << (plan.support->cols[k] + 1) << " " << plan.values[k] << "\n";
  }
}

inline json balance_report_json(const BalanceReport& rep, const BalancerState& state,
                                BalanceMethod method) {
  json j;
  j["method"] = to_string(method);
  j["n"] = state.n;
  j["t"] = state.t;
  j["error"] = rep.error;
  j["iterations"] = rep.iterations;
  j["converged"] = rep.converged;
  j["geometric_mean_norm"] = rep.geometric_mean_norm;
  j["log10_geometric_mean_norm"] = rep.log10_geometric_mean_norm;
  j["objective"] = rep.objective;
  j["newton_decrements"] = rep.newton_decrements;
  return j;
}

inline json solve_report_json(const SolveReport& rep, bool timings = false) {
  json j;
  j["duality_gap"] = rep.duality_gap;
  j["relative_gap"] = rep.relative_gap;
  j["t_achieved"] = rep.t_achieved;
  j["termination"] = to_string(rep.termination);
  j["has_reference"] = rep.has_reference;
  json tr = json::array();
  for (const auto& r : rep.trace) {
    tr.push_back({{"t", r.t},
                  {"gap", r.gap},
                  {"relative_gap", r.relative_gap},
                  {"infeasibility", r.infeasibility},
                  {"nu_inf_norm", r.nu_inf},
                  {"certificate", r.certificate},
                  {"support_size", r.support_size},
                  {"seconds", timings ? r.seconds : 0.0},
                  {"balance_error", r.balance_error},
                  {"inner_iterations", r.inner_iterations},
                  {"centered", r.centered}});
  }
  j["trace"] = std::move(tr);
  return j;
}

inline json registration_report_json(const RegistrationReport& rep, const RigidTransform& tf) {
  json j;
  j["error"] = rep.error;
  j["iterations"] = rep.iterations;
  j["converged"] = rep.converged;
  j["regularizer_weight"] = tf.regularizer_weight;
  json q = json::array();
  for (Eigen::Index i = 0; i < tf.Q.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index jj = 0; jj < tf.Q.cols(); ++jj) row.push_back(tf.Q(i, jj));
    q.push_back(std::move(row));
  }
  j["Q"] = std::move(q);
  return j;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

// Balancing iteration trace. Timing columns are zeroed unless timings is set,
// keeping default outputs byte-deterministic.
inline void write_balance_trace_csv(const std::string& path, const BalanceReport& rep,
                                    bool timings) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iter,error,objective,newton_decrement,wall_seconds\n";
  out << std::setprecision(17);
  for (const auto& r : rep.trace) {
    out << r.iter << "," << r.error << "," << r.objective << "," << r.newton_decrement << ","
        << (timings ? r.seconds : 0.0) << "\n";
    out.flush();
  }
}

inline void write_solve_trace_csv(const std::string& path, const SolveReport& rep,
                                  bool timings) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "t,gap,relative_gap,infeasibility,nu_inf_norm,support_size,seconds\n";
  out << std::setprecision(17);
  for (const auto& r : rep.trace) {
    out << r.t << "," << r.gap << "," << r.relative_gap << "," << r.infeasibility << ","
        << r.nu_inf << "," << r.support_size << "," << (timings ? r.seconds : 0.0) << "\n";
    out.flush();
  }
}

inline void write_registration_trace_csv(const std::string& path,
                                         const RegistrationReport& rep, bool timings) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iter,t,error,transport_seconds,svd_seconds,support_size\n";
  out << std::setprecision(17);
  for (const auto& r : rep.trace) {
    out << r.iter << "," << r.t << "," << r.error << "," << (timings ? r.transport_seconds : 0.0)
        << "," << (timings ? r.svd_seconds : 0.0) << "," << r.support_size << "\n";
    out.flush();
  }
}

}  // namespace otb::io
