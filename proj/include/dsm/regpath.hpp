#pragma once

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dsm/contraction.hpp"
#include "dsm/flow.hpp"
#include "dsm/operator.hpp"
#include "dsm/space.hpp"

namespace dsm {

struct EpsSchedule {
  double eps_start = 0.1;
  double factor = 0.1;
  int count = 5;

  std::vector<double> generate(double eps0 = 1.0) const {
    if (!(eps_start > 0.0)) throw InputError("EpsSchedule: eps_start must be positive");
    if (!(factor > 0.0) || !(factor < 1.0)) throw InputError("EpsSchedule: factor must lie in (0,1)");
    if (count < 3) throw InputError("EpsSchedule: need count >= 3");
    std::vector<double> eps(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      eps[i] = eps_start * std::pow(factor, i);
      if (!(eps[i] > 0.0) || !(eps[i] < eps0)) {
        throw InputError("EpsSchedule: value " + std::to_string(eps[i]) + " outside (0, eps0)");
      }
    }
    return eps;
  }
};

enum class PathMethod { flow, contraction, hybrid };

inline std::string to_string(PathMethod m) {
  switch (m) {
    case PathMethod::flow:
      return "flow";
    case PathMethod::contraction:
      return "contraction";
    default:
      return "hybrid";
  }
}

inline PathMethod path_method_from_string(const std::string& s) {
  if (s == "flow") return PathMethod::flow;
  if (s == "contraction") return PathMethod::contraction;
  if (s == "hybrid") return PathMethod::hybrid;
  throw InputError("unknown path method '" + s + "'");
}

struct PathRecord {
  double eps = 0.0;
  Vec v_eps;
  double residual = 0.0;
  std::optional<double> error;  // ||v_eps - y|| when y is known
  int iterations = 0;
  PathMethod method = PathMethod::flow;
  bool ok = false;
  std::string message;
};

struct RatePathResult {
  std::vector<PathRecord> records;  // sorted by decreasing eps
  std::optional<double> k_hat;
  std::optional<double> c_hat;
  std::optional<double> fit_rms;
  int excluded_zero_errors = 0;
};

struct PathTols {
  double eps0 = 1.0;
  double delta = 1e-8;       // flow residual target per eps
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double t_max = 200.0;
  long max_steps = 500000;
  double fp_tol = 1e-12;     // contraction step tolerance
  int fp_max_iter = 200;
  bool warm_start = true;    // flow method: reuse v_eps as the next start
  int jobs = 1;              // > 1 fans eps points out across threads (cold start only)
};

namespace detail {

inline void parallel_for(int jobs, int count, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(jobs));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = next++; i < count; i = next++) body(i);
      } catch (...) {
        failures[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

// One point of the eps-path. warm_out (when non-null) receives the flow endpoint so the
// sequential driver can chain starts; the parallel driver passes null.
inline PathRecord path_point(const ProblemOp& op, const Vec& start, double eps, PathMethod method,
                             const PathTols& tols, const Vec* psi, Vec* warm_out) {
  PathRecord rec;
  rec.eps = eps;
  rec.method = method;
  if (method == PathMethod::flow || method == PathMethod::hybrid) {
    FlowConfig cfg;
    cfg.reg = RegParams{eps, tols.eps0, 1.0, 1.0};
    cfg.delta = method == PathMethod::hybrid ? std::max(tols.delta, 1e-6) : tols.delta;
    cfg.t_max = tols.t_max;
    cfg.integrator_rel_tol = tols.rel_tol;
    cfg.integrator_abs_tol = tols.abs_tol;
    cfg.max_steps = tols.max_steps;
    FlowTrace trace = integrate_dsm(op, start, cfg);
    rec.v_eps = trace.w_inf;
    rec.iterations = static_cast<int>(trace.accepted_steps);
    if (warm_out) *warm_out = trace.w_inf;
  }
  if (method == PathMethod::contraction || method == PathMethod::hybrid) {
    const Vec& y = *op.known_solution;
    FixedPointOptions opt;
    opt.tol = tols.fp_tol;
    opt.max_iter = tols.fp_max_iter;
    RegParams reg{eps, tols.eps0, 1.0, 1.0};
    Vec z0(y.size(), 0.0);
    if (method == PathMethod::hybrid) z0 = sub(rec.v_eps, y);  // polish the flow's endpoint
    ContractionDiagnostics diag = fixed_point_core(op, y, *psi, Vec(y.size(), 0.0), reg, opt, z0);
    rec.v_eps = diag.v_eps;
    rec.iterations += diag.iterations;
  }
  rec.residual = norm(regularized_residual(op, rec.v_eps, eps), op.norm_kind);
  if (op.known_solution) rec.error = norm(sub(rec.v_eps, *op.known_solution), op.norm_kind);
  rec.ok = true;
  return rec;
}

}  // namespace detail

// Solves F(v) + eps v = 0 along a geometric eps-schedule and fills errors where y is known.
// Individual failures are recorded and the path continues; only an all-fail path throws.
inline RatePathResult run_path(const ProblemOp& op, const Vec& w0, const EpsSchedule& sched, PathMethod method,
                               const PathTols& tols = {}) {
  std::vector<double> eps_values = sched.generate(tols.eps0);
  if (tols.jobs < 1) throw InputError("run_path: jobs must be >= 1");
  if ((method == PathMethod::contraction || method == PathMethod::hybrid) && !op.known_solution) {
    throw InputError("run_path: contraction-based methods need a known solution");
  }

  std::optional<Vec> psi;
  if (method == PathMethod::contraction || method == PathMethod::hybrid) {
    if (op.known_source) {
      psi = *op.known_source;
    } else {
      psi = source_condition_solve(op, *op.known_solution).first;
    }
  }

  RatePathResult result;
  result.records.resize(eps_values.size());
  auto solve_one = [&](int i, const Vec& start, Vec* warm_out) {
    try {
      result.records[static_cast<std::size_t>(i)] =
          detail::path_point(op, start, eps_values[static_cast<std::size_t>(i)], method, tols,
                             psi ? &*psi : nullptr, warm_out);
    } catch (const Error& e) {
      PathRecord rec;
      rec.eps = eps_values[static_cast<std::size_t>(i)];
      rec.method = method;
      rec.ok = false;
      rec.message = e.what();
      result.records[static_cast<std::size_t>(i)] = std::move(rec);
    }
  };

  int jobs = tols.jobs;
  if (jobs > 1 && tols.warm_start) {
    warn("warm-start path is inherently sequential; ignoring jobs=" + std::to_string(jobs));
    jobs = 1;
  }
  if (jobs > 1) {
    detail::parallel_for(jobs, static_cast<int>(eps_values.size()), [&](int i) { solve_one(i, w0, nullptr); });
  } else {
    Vec start = w0;
    for (int i = 0; i < static_cast<int>(eps_values.size()); ++i) {
      Vec warm = start;
      solve_one(i, start, &warm);
      if (tols.warm_start) start = warm;
    }
  }

  int failures = 0;
  for (const auto& rec : result.records) {
    if (!rec.ok) ++failures;
  }
  if (failures == static_cast<int>(eps_values.size())) {
    throw PathError("run_path: every eps value failed; first message: " + result.records.front().message);
  }
  return result;
}

// OLS fit of log error = log c_hat + k_hat log eps over records with positive errors; fills the
// path in place. Zero-error records are excluded (log 0), with the exclusion count recorded.
inline void fit_rate(RatePathResult& path) {
  std::vector<std::pair<double, double>> pts;
  path.excluded_zero_errors = 0;
  for (const auto& rec : path.records) {
    if (!rec.ok || !rec.error) continue;
    if (*rec.error > 0.0) {
      pts.emplace_back(rec.eps, *rec.error);
    } else {
      ++path.excluded_zero_errors;
    }
  }
  if (pts.size() < 3) {
    throw InputError("fit_rate: insufficient data, need >= 3 records with positive errors (have " +
                     std::to_string(pts.size()) + ", excluded " + std::to_string(path.excluded_zero_errors) +
                     " zero-error records)");
  }
  double slope = 0.0, intercept = 0.0, rms = 0.0;
  ols_loglog(pts, slope, intercept, rms);
  path.k_hat = slope;
  path.c_hat = std::exp(intercept);
  path.fit_rms = rms;
}

struct ProbeResult {
  std::vector<std::pair<double, double>> points;  // (eps, ||v_eps||), decreasing eps
  bool divergent = false;
  double growth_ratio = 0.0;  // last / first

  std::string verdict() const { return divergent ? "divergent" : "bounded"; }
};

// "Divergent" means strictly increasing norms as eps decreases AND a last-to-first ratio above
// 10, the finite surrogate for f outside the range of the limiting operator.
inline ProbeResult probe_from_points(std::vector<std::pair<double, double>> points) {
  if (points.empty()) throw InputError("probe_from_points: no points");
  ProbeResult result;
  result.points = std::move(points);
  bool increasing = true;
  for (std::size_t i = 1; i < result.points.size(); ++i) {
    if (result.points[i].second <= result.points[i - 1].second) increasing = false;
  }
  result.growth_ratio = result.points.back().second / result.points.front().second;
  result.divergent = increasing && result.growth_ratio > 10.0;
  return result;
}

// Tracks ||v_eps|| for the linear equation (A + eps I) v = f along the schedule.
inline ProbeResult divergence_probe(const ProblemOp& op, const EpsSchedule& sched, double eps0 = 1.0, int jobs = 1) {
  if (!op.linear) throw InputError("divergence_probe: defined for linear problems only");
  if (jobs < 1) throw InputError("divergence_probe: jobs must be >= 1");
  std::vector<double> eps_values = sched.generate(eps0);
  Matrix a = jacobian(op, op.u0);
  Vec f = scaled(op.eval(Vec(static_cast<std::size_t>(op.dim), 0.0)), -1.0);  // F(0) = -f
  std::vector<std::pair<double, double>> points(eps_values.size());
  detail::parallel_for(jobs, static_cast<int>(eps_values.size()), [&](int i) {
    Vec v = resolvent_solve(a, eps_values[static_cast<std::size_t>(i)], f);
    points[static_cast<std::size_t>(i)] = {eps_values[static_cast<std::size_t>(i)], norm(v, op.norm_kind)};
  });
  return probe_from_points(std::move(points));
}

}  // namespace dsm
