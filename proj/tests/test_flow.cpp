#include <cmath>

#include <gtest/gtest.h>

#include "dsm/flow.hpp"
#include "dsm/problems.hpp"

using namespace dsm;

namespace {

ProblemOp identity_op(int n) {
  ProblemOp op;
  op.name = "identity";
  op.dim = n;
  op.eval = [](const Vec& u) { return u; };
  op.u0.assign(static_cast<std::size_t>(n), 0.0);
  op.ball_radius = 10.0;
  op.linear = true;
  op.analytic_m1 = 1.0;
  op.analytic_m2 = 0.0;
  op.analytic_m3 = 0.0;
  return op;
}

FlowConfig base_config(double eps, double delta) {
  FlowConfig cfg;
  cfg.reg = RegParams{eps, 1.0, 1.0, 1.0};
  cfg.delta = delta;
  return cfg;
}

}  // namespace

TEST(Flow, IdentityTrajectoryIsExactExponential) {
  // F(u) = u gives w' = -w regardless of eps, so w(t) = w0 e^{-t} coordinate-wise.
  ProblemOp op = identity_op(2);
  FlowConfig cfg = base_config(0.1, 1e-6);
  Vec w0 = {1.0, 0.5};
  FlowTrace tr = integrate_dsm(op, w0, cfg);
  ASSERT_GE(tr.times.size(), 10u);
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    double decay = std::exp(-tr.times[i]);
    EXPECT_NEAR(tr.states[i][0], w0[0] * decay, 1e-7);
    EXPECT_NEAR(tr.states[i][1], w0[1] * decay, 1e-7);
  }
  EXPECT_LE(tr.residual_norms.back(), cfg.delta);
}

TEST(Flow, StoppingTimeMatchesLogRatio) {
  ProblemOp op = identity_op(1);
  FlowConfig cfg = base_config(0.1, 1e-6);
  FlowTrace tr = integrate_dsm(op, {1.0}, cfg);
  // F0 = (1 + eps) ||w0|| = 1.1, so t* = ln(1.1 / 1e-6).
  EXPECT_NEAR(tr.t_star, 13.9108208, 1e-6);
  EXPECT_GE(tr.times.back(), tr.t_star - 1e-12);
  EXPECT_LE(tr.residual_norms.back(), cfg.delta);
  EXPECT_FALSE(tr.reached_t_max);
}

TEST(Flow, NonlinearResidualStillDecaysExactly) {
  // The derivation never linearizes: ||F(w)+eps w|| = F0 e^{-t} holds for the cubic too.
  ProblemOp op = make_cubic(1, 2.0);
  FlowConfig cfg = base_config(0.1, 1e-8);
  FlowTrace tr = integrate_dsm(op, {1.0}, cfg);
  EXPECT_NEAR(tr.F0, 2.1, 1e-15);
  DecayReport rep = decay_report(op, tr, cfg.reg, 5, 42);
  EXPECT_LE(rep.norm_decay_max_dev, 1e-6);
  EXPECT_LE(tr.residual_norms.back(), cfg.delta);
}

TEST(Flow, FunctionalDecayMatchesNormDecay) {
  ProblemOp op = identity_op(3);
  FlowConfig cfg = base_config(0.05, 1e-8);
  FlowTrace tr = integrate_dsm(op, {0.4, -0.3, 0.7}, cfg);
  DecayReport rep = decay_report(op, tr, cfg.reg, 20, 7);
  EXPECT_LE(rep.functional_decay_max_dev, 1e-6);
  EXPECT_EQ(rep.h_samples, 20);
}

TEST(Flow, AprioriBoundsHold) {
  ProblemOp op = make_linear_diag({1.0, 0.5}, {1.0, 1.0}, NormKind::L2);
  FlowConfig cfg = base_config(0.1, 1e-8);
  FlowTrace tr = integrate_dsm(op, {0.0, 0.0}, cfg);
  DecayReport rep = decay_report(op, tr, cfg.reg, 5, 3);  // c0 = 1, k = 1 dominates lambda_min = 0.5
  EXPECT_EQ(rep.tail_violation_fraction, 0.0);
  EXPECT_TRUE(rep.drift_bound_ok);
}

TEST(Flow, EquilibriumStartReturnsSinglePoint) {
  ProblemOp op = make_cubic(2, 1.0);
  FlowConfig cfg = base_config(0.1, 1e-8);
  FlowTrace tr = integrate_dsm(op, {0.0, 0.0}, cfg);  // F(0) + eps*0 = 0
  EXPECT_EQ(tr.times.size(), 1u);
  EXPECT_EQ(tr.w_inf, tr.w0);
  EXPECT_EQ(tr.F0, 0.0);
  DecayReport rep = decay_report(op, tr, cfg.reg, 5, 3);
  EXPECT_TRUE(rep.zero_initial_residual);
}

TEST(Flow, TighterToleranceTightensDecay) {
  ProblemOp op = make_cubic(1, 2.0);
  FlowConfig loose = base_config(0.1, 1e-8);
  loose.integrator_rel_tol = 1e-5;
  loose.integrator_abs_tol = 1e-7;
  FlowConfig tight = base_config(0.1, 1e-8);
  FlowTrace tl = integrate_dsm(op, {1.0}, loose);
  FlowTrace tt = integrate_dsm(op, {1.0}, tight);
  double dl = decay_report(op, tl, loose.reg, 0, 0).norm_decay_max_dev;
  double dt = decay_report(op, tt, tight.reg, 0, 0).norm_decay_max_dev;
  EXPECT_LT(dt, dl);
  EXPECT_LE(dt, 1e-6);
}

TEST(Flow, BudgetExceededThrows) {
  ProblemOp op = identity_op(1);
  FlowConfig cfg = base_config(0.1, 1e-8);
  cfg.max_steps = 3;
  EXPECT_THROW(integrate_dsm(op, {1.0}, cfg), BudgetError);
}

TEST(Flow, SingularizedJacobianSurfacesAsNumericError) {
  ProblemOp op;
  op.name = "affine";
  op.dim = 1;
  op.eval = [](const Vec& u) { return Vec{-0.1 * u[0] + 1.0}; };
  op.jac = [](const Vec&) {  // analytic, so A + eps I is exactly zero (FD noise would hide it)
    Matrix j(1, 1);
    j(0, 0) = -0.1;
    return j;
  };
  op.u0 = {0.0};
  op.ball_radius = 10.0;
  op.linear = true;
  FlowConfig cfg = base_config(0.1, 1e-8);  // A + eps I = 0
  EXPECT_THROW(integrate_dsm(op, {0.0}, cfg), NumericError);
}

TEST(Flow, HorizonCapSetsFlag) {
  ProblemOp op = identity_op(1);
  FlowConfig cfg = base_config(0.1, 1e-8);
  cfg.t_max = 1.0;  // t* = ln(1.1e8) >> 1
  FlowTrace tr = integrate_dsm(op, {1.0}, cfg);
  EXPECT_TRUE(tr.reached_t_max);
  EXPECT_NEAR(tr.times.back(), 1.0, 1e-12);
  EXPECT_GT(tr.residual_norms.back(), cfg.delta);
}

TEST(Flow, ConfigValidation) {
  ProblemOp op = identity_op(1);
  FlowConfig cfg = base_config(0.1, 1e-8);
  cfg.delta = 0.0;
  EXPECT_THROW(integrate_dsm(op, {1.0}, cfg), InputError);
  cfg = base_config(0.1, 1e-8);
  cfg.t_max = 0.5;
  EXPECT_THROW(integrate_dsm(op, {1.0}, cfg), InputError);
  cfg = base_config(0.1, 1e-8);
  cfg.integrator_rel_tol = 0.5;
  EXPECT_THROW(integrate_dsm(op, {1.0}, cfg), InputError);
  cfg = base_config(0.1, 1e-8);
  EXPECT_THROW(integrate_dsm(op, {1.0, 2.0}, cfg), InputError);  // dimension mismatch
}

TEST(Flow, ReportRejectsMismatchedEps) {
  ProblemOp op = identity_op(1);
  FlowConfig cfg = base_config(0.1, 1e-6);
  FlowTrace tr = integrate_dsm(op, {1.0}, cfg);
  RegParams other{0.2, 1.0, 1.0, 1.0};
  EXPECT_THROW(decay_report(op, tr, other, 5, 1), InputError);
  EXPECT_THROW(decay_report(op, FlowTrace{}, cfg.reg, 5, 1), InputError);
}
