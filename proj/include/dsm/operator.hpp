#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dsm/errors.hpp"
#include "dsm/rng.hpp"
#include "dsm/space.hpp"

namespace dsm {

// F: R^n -> R^n on the ball B(u0, ball_radius), with optional analytic Jacobian, known solution
// y of F(y)=0, known source psi with y = F'(y) psi, and analytic derivative sup-bounds where the
// construction makes them exact.
struct ProblemOp {
  std::string name;
  int dim = 0;
  std::function<Vec(const Vec&)> eval;
  std::function<Matrix(const Vec&)> jac;  // empty -> finite differences
  Vec u0;
  double ball_radius = 1.0;
  std::optional<Vec> known_solution;
  std::optional<Vec> known_source;
  NormKind norm_kind = NormKind::L2;
  bool linear = false;
  std::optional<double> analytic_m1;
  std::optional<double> analytic_m2;
  std::optional<double> analytic_m3;
};

struct RegParams {
  double eps = 1e-2;
  double eps0 = 1.0;
  double k = 1.0;
  double c0 = 1.0;

  void validate() const {
    if (!(eps > 0.0) || !(eps < eps0)) {
      throw InputError("RegParams: need 0 < eps < eps0 (eps=" + std::to_string(eps) +
                       ", eps0=" + std::to_string(eps0) + ")");
    }
    if (!(k > 0.0) || k > 1.0) throw InputError("RegParams: k must lie in (0, 1]");
    if (!(c0 > 0.0)) throw InputError("RegParams: c0 must be positive");
  }
};

struct BoundEstimates {
  double m1 = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  int sample_count = 0;
  std::uint64_t seed = 0;
};

inline Vec regularized_residual(const ProblemOp& op, const Vec& u, double eps) {
  if (static_cast<int>(u.size()) != op.dim) throw InputError("regularized_residual: dimension mismatch");
  Vec f = op.eval(u);
  if (static_cast<int>(f.size()) != op.dim) throw NumericError("regularized_residual: evaluator returned wrong dimension");
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] += eps * u[i];
    if (!std::isfinite(f[i])) {
      throw NumericError("regularized_residual: non-finite value at coordinate " + std::to_string(i));
    }
  }
  return f;
}

inline bool inside_ball(const ProblemOp& op, const Vec& u) {
  return norm(sub(u, op.u0), op.norm_kind) <= op.ball_radius * (1.0 + 1e-12);
}

inline Matrix fd_jacobian(const ProblemOp& op, const Vec& u) {
  Matrix j(op.dim, op.dim);
  Vec up = u, um = u;
  for (int col = 0; col < op.dim; ++col) {
    double h = 1e-6 * (1.0 + std::abs(u[col]));
    up[col] = u[col] + h;
    um[col] = u[col] - h;
    Vec fp = op.eval(up);
    Vec fm = op.eval(um);
    for (int row = 0; row < op.dim; ++row) {
      double q = (fp[row] - fm[row]) / (2.0 * h);
      if (!std::isfinite(q)) {
        throw NumericError("jacobian: non-finite difference quotient at (" + std::to_string(row) + "," +
                           std::to_string(col) + ")");
      }
      j(row, col) = q;
    }
    up[col] = u[col];
    um[col] = u[col];
  }
  return j;
}

inline Matrix jacobian(const ProblemOp& op, const Vec& u) {
  if (static_cast<int>(u.size()) != op.dim) throw InputError("jacobian: dimension mismatch");
  if (!inside_ball(op, u)) {
    warn("jacobian evaluated outside B(u0, " + std::to_string(op.ball_radius) + ") for problem '" + op.name + "'");
  }
  if (op.jac) {
    Matrix j = op.jac(u);
    check_finite(j.a, "jacobian");
    return j;
  }
  return fd_jacobian(op, u);
}

// Max relative deviation between the analytic and finite-difference Jacobians at u.
inline double jacobian_self_test(const ProblemOp& op, const Vec& u) {
  if (!op.jac) return 0.0;
  Matrix ja = op.jac(u);
  Matrix jf = fd_jacobian(op, u);
  double scale = 0.0;
  for (double x : ja.a) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) scale = 1.0;
  double dev = 0.0;
  for (std::size_t i = 0; i < ja.a.size(); ++i) dev = std::max(dev, std::abs(ja.a[i] - jf.a[i]) / scale);
  return dev;
}

// Dense LU with partial pivoting. Factors A once so resolvent-norm estimation and probes can
// reuse it across right-hand sides.
class Lu {
 public:
  explicit Lu(Matrix m) : n_(m.rows), lu_(std::move(m)), piv_(static_cast<std::size_t>(n_)) {
    if (lu_.rows != lu_.cols) throw InputError("Lu: matrix must be square");
    double scale = 0.0;
    for (double x : lu_.a) scale = std::max(scale, std::abs(x));
    for (int col = 0; col < n_; ++col) {
      int pivot_row = col;
      double pivot = std::abs(lu_(col, col));
      for (int r = col + 1; r < n_; ++r) {
        if (std::abs(lu_(r, col)) > pivot) {
          pivot = std::abs(lu_(r, col));
          pivot_row = r;
        }
      }
      if (pivot <= 1e-14 * scale) {
        throw SingularError("matrix singular to working precision (pivot " + std::to_string(pivot) +
                            " at column " + std::to_string(col) + ")");
      }
      piv_[col] = pivot_row;
      if (pivot_row != col) {
        for (int j = 0; j < n_; ++j) std::swap(lu_(col, j), lu_(pivot_row, j));
      }
      for (int r = col + 1; r < n_; ++r) {
        double m = lu_(r, col) / lu_(col, col);
        lu_(r, col) = m;
        for (int j = col + 1; j < n_; ++j) lu_(r, j) -= m * lu_(col, j);
      }
    }
  }

  Vec solve(const Vec& rhs) const {
    if (static_cast<int>(rhs.size()) != n_) throw InputError("Lu::solve: dimension mismatch");
    Vec x = rhs;
    for (int i = 0; i < n_; ++i) {
      if (piv_[i] != static_cast<std::size_t>(i)) std::swap(x[i], x[piv_[i]]);
      for (int j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
    }
    for (int i = n_ - 1; i >= 0; --i) {
      for (int j = i + 1; j < n_; ++j) x[i] -= lu_(i, j) * x[j];
      x[i] /= lu_(i, i);
    }
    return x;
  }

 private:
  int n_;
  Matrix lu_;
  std::vector<std::size_t> piv_;
};

inline Matrix add_eps_identity(const Matrix& a, double eps) {
  Matrix m = a;
  for (int i = 0; i < m.rows; ++i) m(i, i) += eps;
  return m;
}

// Enforced backward-stability gate: the 1e-10 band is relative to 1 + ||rhs|| + ||A_eps||*||x||.
// (Relative to rhs alone it is unattainable in doubles once ||x|| >> ||rhs||, e.g. near-singular
// solves where even the exactly rounded solution carries a residual of order u*||A||*||x||.)
inline void check_solve_residual(const Matrix& a_eps, const Vec& x, const Vec& rhs) {
  Vec r = sub(matvec(a_eps, x), rhs);
  double rn = norm(r, NormKind::Linf);
  double bound = 1e-10 * (1.0 + norm(rhs, NormKind::Linf) +
                          induced_matrix_norm(a_eps, NormKind::Linf) * norm(x, NormKind::Linf));
  if (!(rn <= bound)) {
    throw NumericError("resolvent solve residual " + std::to_string(rn) + " exceeds " + std::to_string(bound));
  }
}

// x with (A + eps I) x = rhs.
inline Vec resolvent_solve(const Matrix& a, double eps, const Vec& rhs) {
  if (a.rows != a.cols) throw InputError("resolvent_solve: matrix must be square");
  if (static_cast<int>(rhs.size()) != a.rows) throw InputError("resolvent_solve: dimension mismatch");
  if (!(eps > 0.0)) throw InputError("resolvent_solve: eps must be positive");
  check_finite(a.a, "resolvent_solve");
  check_finite(rhs, "resolvent_solve");
  Matrix a_eps = add_eps_identity(a, eps);
  Lu lu(a_eps);
  Vec x = lu.solve(rhs);
  check_solve_residual(a_eps, x, rhs);
  return x;
}

// Sampled sup-bounds for ||F'||, ||F''||, ||F'''|| over B(u0, R): M1 from induced Jacobian
// norms, M2/M3 from second/third central differences of t -> F(u + t d) along random unit
// directions (steps 1e-4 and 1e-3). Maxima over samples, hence lower bounds of the true sups.
inline BoundEstimates estimate_derivative_bounds(const ProblemOp& op, int samples, std::uint64_t seed) {
  if (samples < 1) throw InputError("estimate_derivative_bounds: need samples >= 1");
  Rng rng(seed);
  BoundEstimates out;
  out.sample_count = samples;
  out.seed = seed;
  const double t2 = 1e-4;
  const double t3 = 1e-3;
  for (int s = 0; s < samples; ++s) {
    Vec u = rng.ball_point(op.u0, op.ball_radius, op.norm_kind);
    Vec d = rng.unit_direction(op.dim, op.norm_kind);
    Matrix j = jacobian(op, u);
    out.m1 = std::max(out.m1, induced_matrix_norm(j, op.norm_kind));

    Vec fp = op.eval(add_scaled(u, t2, d));
    Vec f0 = op.eval(u);
    Vec fm = op.eval(add_scaled(u, -t2, d));
    Vec d2(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) d2[i] = (fp[i] - 2.0 * f0[i] + fm[i]) / (t2 * t2);

    Vec fp2 = op.eval(add_scaled(u, 2.0 * t3, d));
    Vec fp1 = op.eval(add_scaled(u, t3, d));
    Vec fm1 = op.eval(add_scaled(u, -t3, d));
    Vec fm2 = op.eval(add_scaled(u, -2.0 * t3, d));
    Vec d3(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      d3[i] = (fp2[i] - 2.0 * fp1[i] + 2.0 * fm1[i] - fm2[i]) / (2.0 * t3 * t3 * t3);
    }

    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!std::isfinite(d2[i]) || !std::isfinite(d3[i])) {
        std::ostringstream os;
        os << "estimate_derivative_bounds: non-finite difference at sample " << s << ", coordinate " << i;
        throw NumericError(os.str());
      }
    }
    out.m2 = std::max(out.m2, norm(d2, op.norm_kind));
    out.m3 = std::max(out.m3, norm(d3, op.norm_kind));
  }
  return out;
}

struct GrowthFit {
  double c0 = 0.0;
  double k = 0.0;
  double fit_rms = 0.0;
  std::vector<std::pair<double, double>> samples;  // (eps, ||A_eps^{-1}||)
  bool well_posed_warning = false;
};

// OLS fit of log N = log c0 - k log eps for power-law data; also used for the error-rate fit
// (where the slope enters with the opposite sign convention).
inline void ols_loglog(const std::vector<std::pair<double, double>>& pts, double& slope, double& intercept,
                       double& rms) {
  const double n = static_cast<double>(pts.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (auto [x, y] : pts) {
    double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double det = n * sxx - sx * sx;
  if (det == 0.0) throw InputError("log-log fit: degenerate abscissae");
  slope = (n * sxy - sx * sy) / det;
  intercept = (sy * sxx - sx * sxy) / det;
  double acc = 0.0;
  for (auto [x, y] : pts) {
    double r = std::log(y) - (intercept + slope * std::log(x));
    acc += r * r;
  }
  rms = std::sqrt(acc / n);
}

// Fits ||(A(u)+eps I)^{-1}|| ~ c0 eps^{-k} over the schedule; the inverse is formed column-wise
// from one factorization per eps. k <= 0.01 earns a "well-posed at this point" warning.
inline GrowthFit estimate_resolvent_growth(const ProblemOp& op, const Vec& u, const std::vector<double>& eps_schedule) {
  if (eps_schedule.size() < 3) throw InputError("estimate_resolvent_growth: need at least 3 eps values");
  Matrix a = jacobian(op, u);
  GrowthFit fit;
  for (double eps : eps_schedule) {
    if (!(eps > 0.0)) throw InputError("estimate_resolvent_growth: eps values must be positive");
    Matrix a_eps = add_eps_identity(a, eps);
    Matrix inv(op.dim, op.dim);
    try {
      Lu lu(a_eps);
      Vec e(static_cast<std::size_t>(op.dim), 0.0);
      for (int j = 0; j < op.dim; ++j) {
        e[j] = 1.0;
        Vec col = lu.solve(e);
        e[j] = 0.0;
        for (int i = 0; i < op.dim; ++i) inv(i, j) = col[i];
      }
    } catch (const SingularError& err) {
      throw SingularError("estimate_resolvent_growth at eps=" + std::to_string(eps) + ": " + err.what());
    }
    fit.samples.emplace_back(eps, induced_matrix_norm(inv, op.norm_kind));
  }
  double slope = 0.0, intercept = 0.0;
  ols_loglog(fit.samples, slope, intercept, fit.fit_rms);
  fit.k = -slope;
  fit.c0 = std::exp(intercept);
  if (fit.k <= 0.01) {
    fit.well_posed_warning = true;
    warn("resolvent growth fit k=" + std::to_string(fit.k) + " <= 0.01: problem looks well-posed at this point");
  }
  return fit;
}

}  // namespace dsm
