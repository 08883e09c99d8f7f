#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "dsm/problems.hpp"
#include "dsm/regpath.hpp"

using namespace dsm;

TEST(EpsSchedule, GenerateAndValidate) {
  EpsSchedule s{0.1, 0.1, 4};
  std::vector<double> eps = s.generate();
  ASSERT_EQ(eps.size(), 4u);
  EXPECT_DOUBLE_EQ(eps[0], 0.1);
  EXPECT_NEAR(eps[3], 1e-4, 1e-18);

  EXPECT_THROW((EpsSchedule{0.0, 0.1, 4}.generate()), InputError);
  EXPECT_THROW((EpsSchedule{0.1, 1.0, 4}.generate()), InputError);
  EXPECT_THROW((EpsSchedule{0.1, 0.1, 2}.generate()), InputError);
  EXPECT_THROW((EpsSchedule{2.0, 0.1, 4}.generate(1.0)), InputError);  // above eps0
}

TEST(FitRate, ExactSyntheticSlope) {
  RatePathResult path;
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
    PathRecord rec;
    rec.eps = eps;
    rec.error = 2.0 * eps;
    rec.ok = true;
    path.records.push_back(rec);
  }
  fit_rate(path);
  ASSERT_TRUE(path.k_hat.has_value());
  EXPECT_NEAR(*path.k_hat, 1.0, 1e-12);
  EXPECT_NEAR(*path.c_hat, 2.0, 1e-12);
  EXPECT_LE(*path.fit_rms, 1e-12);
  EXPECT_EQ(path.excluded_zero_errors, 0);
}

TEST(FitRate, RejectsDegenerateData) {
  RatePathResult path;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    PathRecord rec;
    rec.eps = eps;
    rec.error = 0.0;  // exact solves: log-log fit has nothing to work with
    rec.ok = true;
    path.records.push_back(rec);
  }
  try {
    fit_rate(path);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient data"), std::string::npos);
  }
  EXPECT_EQ(path.excluded_zero_errors, 3);
}

TEST(RunPath, ContractionRateOnDiagonal) {
  ProblemOp op = make_linear_diag({1.0, 0.5}, {1.0, 1.0}, NormKind::L2);
  EpsSchedule sched{0.1, 0.1, 5};
  RatePathResult path = run_path(op, op.u0, sched, PathMethod::contraction);
  ASSERT_EQ(path.records.size(), 5u);
  for (const auto& rec : path.records) {
    EXPECT_TRUE(rec.ok);
    EXPECT_LE(rec.residual, 1e-10);
    ASSERT_TRUE(rec.error.has_value());
    // exact error: ||v-y|| = eps * sqrt(sum (lambda_i psi_i / (lambda_i+eps))^2)
    double e0 = 1.0 / (1.0 + rec.eps);
    double e1 = 0.5 * 4.0 / (0.5 + rec.eps);
    EXPECT_NEAR(*rec.error, rec.eps * std::hypot(e0, e1), 1e-10);
  }
  fit_rate(path);
  EXPECT_NEAR(*path.k_hat, 1.0, 0.05);
}

TEST(RunPath, FlowMatchesContraction) {
  ProblemOp op = make_linear_diag({1.0, 0.5}, {1.0, 1.0}, NormKind::L2);
  EpsSchedule sched{0.1, 0.5, 3};
  RatePathResult flow = run_path(op, op.u0, sched, PathMethod::flow);
  RatePathResult fp = run_path(op, op.u0, sched, PathMethod::contraction);
  for (std::size_t i = 0; i < flow.records.size(); ++i) {
    ASSERT_TRUE(flow.records[i].ok);
    // flow stops at residual <= delta, so ||v_flow - v_exact|| <= delta / eps
    double slack = 10.0 * 1e-8 / flow.records[i].eps;
    EXPECT_LE(norm(sub(flow.records[i].v_eps, fp.records[i].v_eps), op.norm_kind), slack);
  }
}

TEST(RunPath, WarmStartAgreesWithCold) {
  ProblemOp op = make_linear_diag({1.0, 0.5}, {1.0, 1.0}, NormKind::L2);
  EpsSchedule sched{0.1, 0.5, 3};
  PathTols warm;
  PathTols cold;
  cold.warm_start = false;
  RatePathResult a = run_path(op, op.u0, sched, PathMethod::flow, warm);
  RatePathResult b = run_path(op, op.u0, sched, PathMethod::flow, cold);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_LE(norm(sub(a.records[i].v_eps, b.records[i].v_eps), op.norm_kind), 1e-6);
  }
}

TEST(RunPath, HybridPolishesToContractionAnswer) {
  ProblemOp op = make_manufactured(6, 12345, 0.05, 0.05);
  EpsSchedule sched{0.1, 0.1, 3};
  RatePathResult hybrid = run_path(op, op.u0, sched, PathMethod::hybrid);
  RatePathResult fp = run_path(op, op.u0, sched, PathMethod::contraction);
  for (std::size_t i = 0; i < hybrid.records.size(); ++i) {
    ASSERT_TRUE(hybrid.records[i].ok);
    EXPECT_LE(norm(sub(hybrid.records[i].v_eps, fp.records[i].v_eps), op.norm_kind), 1e-9);
    EXPECT_LE(hybrid.records[i].residual, 1e-10);
  }
}

TEST(RunPath, ContractionNeedsKnownSolution) {
  ProblemOp op;
  op.name = "anon";
  op.dim = 1;
  op.eval = [](const Vec& u) { return Vec{u[0] - 1.0}; };
  op.u0 = {0.0};
  op.ball_radius = 5.0;
  op.linear = true;
  EpsSchedule sched{0.1, 0.1, 3};
  EXPECT_THROW(run_path(op, op.u0, sched, PathMethod::contraction), InputError);
  EXPECT_THROW(run_path(op, op.u0, sched, PathMethod::hybrid), InputError);
}

TEST(RunPath, RecordsPartialFailuresAndContinues) {
  // F(u) = u - 1 but the evaluation breaks past u = 0.95: only eps = 0.1
  // (v = 1/1.1 = 0.909) stays in the good region.
  ProblemOp op;
  op.name = "guarded-affine";
  op.dim = 1;
  op.eval = [](const Vec& u) {
    if (u[0] > 0.95) return Vec{std::numeric_limits<double>::quiet_NaN()};
    return Vec{u[0] - 1.0};
  };
  op.u0 = {0.0};
  op.ball_radius = 5.0;
  op.linear = true;
  op.known_solution = Vec{1.0};
  EpsSchedule sched{0.1, 0.5, 4};
  RatePathResult path = run_path(op, op.u0, sched, PathMethod::flow);
  ASSERT_EQ(path.records.size(), 4u);
  EXPECT_TRUE(path.records[0].ok);
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_FALSE(path.records[i].ok);
    EXPECT_FALSE(path.records[i].message.empty());
  }
  EXPECT_THROW(fit_rate(path), InputError);  // one good point cannot support a fit
}

TEST(RunPath, AllFailuresThrowPathError) {
  ProblemOp op = make_linear_diag({1.0, 0.5}, {1.0, 1.0}, NormKind::L2);
  EpsSchedule sched{0.1, 0.1, 3};
  PathTols tols;
  tols.max_steps = 1;
  EXPECT_THROW(run_path(op, op.u0, sched, PathMethod::flow, tols), PathError);
}

TEST(Probe, BoundedForWellPosedSystem) {
  ProblemOp op = make_linear_diag(Vec(4, 1.0), Vec(4, 1.0), NormKind::L2);
  EpsSchedule sched{0.1, 0.1, 5};
  ProbeResult res = divergence_probe(op, sched);
  EXPECT_FALSE(res.divergent);
  EXPECT_EQ(res.verdict(), "bounded");
  EXPECT_LE(res.growth_ratio, 1.2);  // ||v|| = 2/(1+eps) moves by ~10% over the schedule
}

TEST(Probe, DetectsRangeDeficiency) {
  ProblemOp op = make_counterexample(1000, 2.0, NormKind::L2);
  EpsSchedule sched{0.1, 0.1, 6};
  ProbeResult res = divergence_probe(op, sched);
  EXPECT_TRUE(res.divergent);
  EXPECT_EQ(res.verdict(), "divergent");
  EXPECT_GT(res.growth_ratio, 10.0);

  ProblemOp healthy = make_counterexample(1000, 4.0, NormKind::L2);
  ProbeResult ok = divergence_probe(healthy, sched);
  EXPECT_FALSE(ok.divergent);
  EXPECT_LE(ok.growth_ratio, 2.0);
}

TEST(Probe, VerdictInvariantUnderDataRescaling) {
  Vec lambda(100), f(100);
  for (int i = 1; i <= 100; ++i) {
    lambda[i - 1] = 1.0 / (static_cast<double>(i) * i);
    f[i - 1] = 1.0 / (static_cast<double>(i) * i);
  }
  Vec f_big = scaled(f, 1e6);
  EpsSchedule sched{0.1, 0.1, 6};
  ProbeResult small = divergence_probe(make_linear_diag(lambda, f, NormKind::L2), sched);
  ProbeResult big = divergence_probe(make_linear_diag(lambda, f_big, NormKind::L2), sched);
  EXPECT_EQ(small.divergent, big.divergent);
  EXPECT_NEAR(small.growth_ratio, big.growth_ratio, 1e-6 * small.growth_ratio);
}

TEST(Probe, RejectsNonlinearProblems) {
  ProblemOp op = make_cubic(2, 1.0);
  EpsSchedule sched{0.1, 0.1, 3};
  EXPECT_THROW(divergence_probe(op, sched), InputError);
}

TEST(Parallel, ColdPathFanOutMatchesSequential) {
  ProblemOp op = make_linear_diag({1.0, 0.5}, {1.0, 1.0}, NormKind::L2);
  EpsSchedule sched{0.1, 0.1, 5};
  PathTols seq;
  seq.warm_start = false;
  PathTols par = seq;
  par.jobs = 3;
  RatePathResult a = run_path(op, op.u0, sched, PathMethod::flow, seq);
  RatePathResult b = run_path(op, op.u0, sched, PathMethod::flow, par);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].v_eps, b.records[i].v_eps);  // bitwise: same work, different threads
    EXPECT_EQ(a.records[i].iterations, b.records[i].iterations);
  }
}

TEST(Parallel, WarmStartIgnoresJobsWithWarning) {
  ProblemOp op = make_linear_diag({1.0, 0.5}, {1.0, 1.0}, NormKind::L2);
  EpsSchedule sched{0.1, 0.5, 3};
  PathTols tols;
  tols.jobs = 4;  // warm_start defaults to true
  std::string captured;
  auto old = warning_handler();
  warning_handler() = [&captured](const std::string& msg) { captured = msg; };
  RatePathResult warm = run_path(op, op.u0, sched, PathMethod::flow, tols);
  warning_handler() = old;
  EXPECT_NE(captured.find("sequential"), std::string::npos);
  PathTols plain;
  RatePathResult ref = run_path(op, op.u0, sched, PathMethod::flow, plain);
  for (std::size_t i = 0; i < ref.records.size(); ++i) {
    EXPECT_EQ(warm.records[i].v_eps, ref.records[i].v_eps);
  }
}

TEST(Parallel, ProbeFanOutMatchesSequential) {
  ProblemOp op = make_counterexample(200, 2.0, NormKind::L2);
  EpsSchedule sched{0.1, 0.1, 6};
  ProbeResult a = divergence_probe(op, sched, 1.0, 1);
  ProbeResult b = divergence_probe(op, sched, 1.0, 4);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].second, b.points[i].second);
  }
  EXPECT_EQ(a.divergent, b.divergent);
}

TEST(PathMethod, StringRoundTrip) {
  EXPECT_EQ(to_string(path_method_from_string("flow")), "flow");
  EXPECT_EQ(to_string(path_method_from_string("contraction")), "contraction");
  EXPECT_EQ(to_string(path_method_from_string("hybrid")), "hybrid");
  EXPECT_THROW(path_method_from_string("newton"), InputError);
}
