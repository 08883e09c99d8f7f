#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dsm/operator.hpp"
#include "dsm/rng.hpp"
#include "dsm/space.hpp"

namespace dsm {

struct FlowConfig {
  RegParams reg;
  double t_max = 50.0;
  double delta = 1e-8;            // target residual norm at the horizon
  double integrator_rel_tol = 1e-8;
  double integrator_abs_tol = 1e-10;
  long max_steps = 200000;
  double initial_step = 1e-3;
  double max_step = 0.1;          // uncapped steps let controller drift ruin the decay identity

  void validate() const {
    reg.validate();
    if (!(delta > 0.0)) throw InputError("FlowConfig: delta must be positive");
    if (!(t_max >= 1.0)) throw InputError("FlowConfig: t_max must be >= 1");
    if (!(integrator_rel_tol > 0.0) || integrator_rel_tol >= 1e-2 || !(integrator_abs_tol > 0.0) ||
        integrator_abs_tol >= 1e-2) {
      throw InputError("FlowConfig: integrator tolerances must lie in (0, 1e-2)");
    }
    if (max_steps < 1) throw InputError("FlowConfig: max_steps must be positive");
    if (!(initial_step > 0.0) || !(max_step > 0.0)) throw InputError("FlowConfig: step sizes must be positive");
  }
};

struct FlowTrace {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> residual_norms;
  double F0 = 0.0;
  Vec w0;
  Vec w_inf;
  double eps = 0.0;
  double t_star = 0.0;
  long accepted_steps = 0;
  long rejected_steps = 0;
  bool reached_t_max = false;     // horizon hit before the residual target
};

namespace detail {

// Dormand-Prince 5(4) tableau; stage 7 equals the next step's stage 1 (FSAL).
struct Dp5 {
  static constexpr std::array<double, 7> c = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static constexpr std::array<std::array<double, 6>, 7> a = {{
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
  }};
  static constexpr std::array<double, 7> b5 = {35.0 / 384,      0.0,        500.0 / 1113, 125.0 / 192,
                                               -2187.0 / 6784, 11.0 / 84,  0.0};
  static constexpr std::array<double, 7> b4 = {5179.0 / 57600,    0.0,          7571.0 / 16695, 393.0 / 640,
                                               -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
};

}  // namespace detail

// Integrates w' = -(A(w)+eps I)^{-1} (F(w)+eps w) from w0 up to t* = ln(F0/delta) (or t_max),
// then keeps stepping until the measured residual actually drops below delta: the decay law is
// exact only up to integration error, so landing on t* alone can leave residual = delta*(1+drift).
inline FlowTrace integrate_dsm(const ProblemOp& op, const Vec& w0, const FlowConfig& cfg) {
  cfg.validate();
  check_finite(w0, "integrate_dsm: w0");
  if (static_cast<int>(w0.size()) != op.dim) throw InputError("integrate_dsm: w0 dimension mismatch");
  const double eps = cfg.reg.eps;

  FlowTrace trace;
  trace.w0 = w0;
  trace.eps = eps;

  // Right-hand side; also hands back the residual vector it already computed.
  auto rhs = [&](const Vec& w, double t, Vec& residual_out) {
    residual_out = regularized_residual(op, w, eps);
    try {
      return scaled(resolvent_solve(jacobian(op, w), eps, residual_out), -1.0);
    } catch (const SingularError& e) {
      throw NumericError("flow failed at t=" + std::to_string(t) + ": " + e.what());
    }
  };

  Vec residual0 = regularized_residual(op, w0, eps);
  trace.F0 = norm(residual0, op.norm_kind);
  trace.times.push_back(0.0);
  trace.states.push_back(w0);
  trace.residual_norms.push_back(trace.F0);
  trace.t_star = trace.F0 > 0.0 ? std::log(trace.F0 / cfg.delta) : 0.0;

  if (trace.F0 <= cfg.delta) {  // already at (or below) target: zero-length integration
    trace.w_inf = w0;
    return trace;
  }

  const double t_horizon = std::min(trace.t_star, cfg.t_max);
  using detail::Dp5;
  Vec w = w0;
  double t = 0.0;
  double h = std::min({cfg.initial_step, cfg.max_step, t_horizon});
  Vec res_new;
  double res_new_norm = trace.F0;
  std::array<Vec, 7> k;
  Vec dump;
  k[0] = rhs(w, 0.0, dump);
  long total_steps = 0;
  bool past_horizon = false;

  while (true) {
    double t_target = past_horizon ? cfg.t_max : t_horizon;
    if (t >= t_target - 1e-14 * std::max(1.0, t_target)) {
      if (!past_horizon) {
        past_horizon = true;
        if (res_new_norm <= cfg.delta || t >= cfg.t_max - 1e-14 * std::max(1.0, cfg.t_max)) break;
        continue;
      }
      break;
    }
    if (++total_steps > cfg.max_steps) {
      throw BudgetError("integrate_dsm: exceeded max_steps=" + std::to_string(cfg.max_steps) + " at t=" +
                        std::to_string(t));
    }
    bool clipped = h >= t_target - t;
    double h_try = clipped ? t_target - t : h;

    Vec w_new;  // stage 7 sits at the b5 solution (its a-row equals b5), so it doubles as w_new
    for (int s = 1; s < 7; ++s) {
      Vec ws = w;
      for (int j = 0; j < s; ++j) {
        if (Dp5::a[s][j] != 0.0) ws = add_scaled(ws, h_try * Dp5::a[s][j], k[j]);
      }
      k[s] = rhs(ws, t + Dp5::c[s] * h_try, s == 6 ? res_new : dump);
      if (s == 6) w_new = ws;
    }
    Vec err_vec(w.size(), 0.0);
    for (int s = 0; s < 7; ++s) {
      double d = Dp5::b5[s] - Dp5::b4[s];
      if (d != 0.0) err_vec = add_scaled(err_vec, h_try * d, k[s]);
    }
    double err = norm(err_vec, op.norm_kind) /
                 (cfg.integrator_abs_tol + cfg.integrator_rel_tol * norm(w_new, op.norm_kind));

    bool accepted = err <= 1.0;
    if (accepted) {
      t += h_try;
      w = w_new;
      k[0] = k[6];  // FSAL
      res_new_norm = norm(res_new, op.norm_kind);
      trace.times.push_back(t);
      trace.states.push_back(w);
      trace.residual_norms.push_back(res_new_norm);
      ++trace.accepted_steps;
      if (past_horizon && res_new_norm <= cfg.delta) break;
    } else {
      ++trace.rejected_steps;
    }

    if (!(accepted && clipped)) {  // a step shortened to land on the horizon says nothing about h
      double factor = 0.9 * std::pow(std::max(err, 1e-300), -0.2);
      h = std::min(h_try * std::clamp(factor, 0.2, 5.0), cfg.max_step);
    }
    if (h < 1e-12) {
      throw StiffnessError("integrate_dsm: step size underflow (h=" + std::to_string(h) + ") at t=" +
                           std::to_string(t));
    }
  }

  trace.w_inf = w;
  trace.reached_t_max = trace.residual_norms.back() > cfg.delta;
  return trace;
}

struct DecayReport {
  double norm_decay_max_dev = 0.0;        // max_i |residual_i / (F0 e^{-t_i}) - 1|
  double functional_decay_max_dev = 0.0;  // max over sampled h of |g(t_i) - g(0) e^{-t_i}| / F0
  double tail_violation_fraction = 0.0;   // ||w(t_i)-w_inf|| <= c0 eps^{-k} F0 e^{-t_i}
  bool drift_bound_ok = true;             // ||w(t_i)-w0|| <= c0 eps^{-k} F0 for all i
  bool zero_initial_residual = false;
  int h_samples = 0;
  std::uint64_t seed = 0;
};

// Checks the computed trajectory against the exponential decay law (in norm and against random
// dual unit functionals) and the two a-priori bounds with the caller's (c0, k).
inline DecayReport decay_report(const ProblemOp& op, const FlowTrace& trace, const RegParams& reg, int h_samples,
                                std::uint64_t seed) {
  if (trace.times.empty()) throw InputError("decay_report: empty trace");
  if (trace.eps != reg.eps) throw InputError("decay_report: trace eps differs from reg.eps");
  DecayReport rep;
  rep.h_samples = h_samples;
  rep.seed = seed;
  if (trace.F0 == 0.0) {
    rep.zero_initial_residual = true;
    return rep;
  }

  std::vector<Vec> residuals(trace.times.size());
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    residuals[i] = regularized_residual(op, trace.states[i], trace.eps);
  }

  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    double expected = trace.F0 * std::exp(-trace.times[i]);
    rep.norm_decay_max_dev = std::max(rep.norm_decay_max_dev, std::abs(trace.residual_norms[i] / expected - 1.0));
  }

  Rng rng(seed);
  for (int s = 0; s < h_samples; ++s) {
    Vec h = rng.unit_direction(op.dim, dual(op.norm_kind));
    double g0 = dual_pair(h, residuals[0]);
    for (std::size_t i = 0; i < trace.times.size(); ++i) {
      double g = dual_pair(h, residuals[i]);
      double dev = std::abs(g - g0 * std::exp(-trace.times[i])) / trace.F0;
      rep.functional_decay_max_dev = std::max(rep.functional_decay_max_dev, dev);
    }
  }

  const double amplification = reg.c0 * std::pow(reg.eps, -reg.k);
  std::size_t violations = 0;
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    double bound = amplification * trace.F0 * std::exp(-trace.times[i]);
    if (norm(sub(trace.states[i], trace.w_inf), op.norm_kind) > bound) ++violations;
    if (norm(sub(trace.states[i], trace.w0), op.norm_kind) > amplification * trace.F0) rep.drift_bound_ok = false;
  }
  rep.tail_violation_fraction = static_cast<double>(violations) / static_cast<double>(trace.times.size());
  return rep;
}

}  // namespace dsm
