#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dsm/contraction.hpp"
#include "dsm/operator.hpp"
#include "dsm/rng.hpp"
#include "dsm/space.hpp"

namespace dsm {

struct ProblemSpec {
  std::string name;
  int n = 0;
  std::map<std::string, double> params;
  std::uint64_t seed = 12345;
  NormKind norm_kind = NormKind::L2;
};

// F(u) = Lambda u - f with Lambda = diag(lambda), lambda_i >= 0. When f is solvable the minimal
// solution y (zero on zero modes) and its source psi are attached from the construction itself;
// an LU-based source solve would rightly refuse the singular diagonal.
inline ProblemOp make_linear_diag(const Vec& lambda, const Vec& f, NormKind kind) {
  if (lambda.size() != f.size() || lambda.empty()) throw SpecError("linear-diag: lambda/f size mismatch");
  for (double l : lambda) {
    if (!(l >= 0.0)) throw SpecError("linear-diag: eigenvalues must be nonnegative");
  }
  const int n = static_cast<int>(lambda.size());
  ProblemOp op;
  op.name = "linear-diag";
  op.dim = n;
  op.norm_kind = kind;
  op.linear = true;
  op.u0.assign(lambda.size(), 0.0);
  op.eval = [lambda, f](const Vec& u) {
    Vec out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = lambda[i] * u[i] - f[i];
    return out;
  };
  op.jac = [lambda, n](const Vec&) {
    Matrix j(n, n);
    for (int i = 0; i < n; ++i) j(i, i) = lambda[i];
    return j;
  };
  double lmax = 0.0;
  for (double l : lambda) lmax = std::max(lmax, l);
  op.analytic_m1 = lmax;
  op.analytic_m2 = 0.0;
  op.analytic_m3 = 0.0;

  bool solvable = true;
  Vec y(lambda.size(), 0.0), psi(lambda.size(), 0.0);
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (lambda[i] > 0.0) {
      y[i] = f[i] / lambda[i];
      psi[i] = y[i] / lambda[i];
    } else if (f[i] != 0.0) {
      solvable = false;
    }
  }
  if (solvable) {
    op.known_solution = y;
    op.known_source = psi;
    double ynorm = norm(y, kind);
    op.ball_radius = std::max(1.0, 2.0 * ynorm);
  }
  return op;
}

// F(u) = H u - f with the Hilbert matrix H_ij = 1/(i+j-1) and f = H*ones: a severely
// ill-conditioned spd benchmark with known solution y = ones.
inline ProblemOp make_hilbert(int n, NormKind kind = NormKind::L2) {
  if (n < 1) throw SpecError("linear-hilbert: need n >= 1");
  Matrix h(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) h(i, j) = 1.0 / static_cast<double>(i + j + 1);
  }
  Vec y(static_cast<std::size_t>(n), 1.0);
  Vec f = matvec(h, y);
  ProblemOp op;
  op.name = "linear-hilbert";
  op.dim = n;
  op.norm_kind = kind;
  op.linear = true;
  op.u0.assign(y.size(), 0.0);
  op.eval = [h, f](const Vec& u) { return sub(matvec(h, u), f); };
  op.jac = [h](const Vec&) { return h; };
  op.analytic_m2 = 0.0;
  op.analytic_m3 = 0.0;
  op.known_solution = y;
  op.ball_radius = std::max(1.0, 2.0 * norm(y, kind));
  return op;
}

// F(u) = u + u^3 componentwise; y = 0, psi = 0, exact bounds on B(0,R).
inline ProblemOp make_cubic(int n, double ball_radius, NormKind kind = NormKind::L2) {
  if (n < 1) throw SpecError("cubic: need n >= 1");
  if (!(ball_radius > 0.0)) throw SpecError("cubic: ball radius must be positive");
  ProblemOp op;
  op.name = "cubic";
  op.dim = n;
  op.norm_kind = kind;
  op.ball_radius = ball_radius;
  op.u0.assign(static_cast<std::size_t>(n), 0.0);
  op.eval = [](const Vec& u) {
    Vec out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] + u[i] * u[i] * u[i];
    return out;
  };
  op.jac = [n](const Vec& u) {
    Matrix j(n, n);
    for (int i = 0; i < n; ++i) j(i, i) = 1.0 + 3.0 * u[i] * u[i];
    return j;
  };
  op.analytic_m1 = 1.0 + 3.0 * ball_radius * ball_radius;
  op.analytic_m2 = 6.0 * ball_radius;
  op.analytic_m3 = 6.0;
  op.known_solution = Vec(static_cast<std::size_t>(n), 0.0);
  op.known_source = Vec(static_cast<std::size_t>(n), 0.0);
  return op;
}

// F(u) = A0 (u-y) + B[(u-y),(u-y)] with A0 = Q diag(linspace(d_min,d_max)) Q^T from a seeded
// orthogonalization and B[v,w]_i = beta v_i w_i. Every hypothesis holds by construction:
// y = A0 psi with psi = psi_norm * (normalized ones), M2 = 2 beta exactly, M3 = 0.
inline ProblemOp make_manufactured(int n, std::uint64_t seed, double psi_norm, double beta, double d_min = 0.5,
                                   double d_max = 2.0, NormKind kind = NormKind::L2) {
  if (n < 1) throw SpecError("manufactured: need n >= 1");
  if (!(d_min > 0.0) || !(d_max >= d_min)) throw SpecError("manufactured: need 0 < d_min <= d_max");
  if (psi_norm < 0.0 || beta < 0.0) throw SpecError("manufactured: psi_norm and beta must be nonnegative");

  Rng rng(seed);
  Matrix q(n, n);
  for (int col = 0; col < n; ++col) {  // Gram-Schmidt on gaussian draws
    Vec v = rng.gaussian_vec(n);
    for (int prev = 0; prev < col; ++prev) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += v[i] * q(i, prev);
      for (int i = 0; i < n; ++i) v[i] -= dot * q(i, prev);
    }
    double len = norm(v, NormKind::L2);
    if (len < 1e-8) throw NumericError("manufactured: degenerate random basis draw");
    for (int i = 0; i < n; ++i) q(i, col) = v[i] / len;
  }
  Matrix a0(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < n; ++l) {
        double d = n == 1 ? d_min : d_min + (d_max - d_min) * static_cast<double>(l) / (n - 1);
        acc += q(i, l) * d * q(j, l);
      }
      a0(i, j) = acc;
    }
  }
  for (int i = 0; i < n; ++i) {  // enforce exact symmetry
    for (int j = i + 1; j < n; ++j) {
      double s = 0.5 * (a0(i, j) + a0(j, i));
      a0(i, j) = s;
      a0(j, i) = s;
    }
  }

  Vec ones(static_cast<std::size_t>(n), 1.0);
  double ones_len = norm(ones, kind);
  Vec psi = scaled(ones, psi_norm / ones_len);
  Vec y = matvec(a0, psi);

  ProblemOp op;
  op.name = "manufactured";
  op.dim = n;
  op.norm_kind = kind;
  op.eval = [a0, y, beta](const Vec& u) {
    Vec d = sub(u, y);
    Vec out = matvec(a0, d);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += beta * d[i] * d[i];
    return out;
  };
  op.jac = [a0, y, beta, n](const Vec& u) {
    Matrix j = a0;
    for (int i = 0; i < n; ++i) j(i, i) += 2.0 * beta * (u[i] - y[i]);
    return j;
  };
  op.u0 = y;
  op.ball_radius = std::max(1.0, 2.0 * norm(y, kind));
  op.known_solution = y;
  op.known_source = psi;
  op.analytic_m2 = 2.0 * beta;
  op.analytic_m3 = 0.0;
  return op;
}

// Counterexample family: lambda_i = 1/i^2, f_i = i^{-beta}. In the joint limit n -> infinity,
// eps -> 0, beta <= 2.5 makes ||v_eps|| grow without bound (f drifts out of the range of the
// limiting operator) while beta > 3 keeps the source condition healthy.
inline ProblemOp make_counterexample(int n, double beta, NormKind kind = NormKind::L2) {
  if (n < 1) throw SpecError("counterexample: need n >= 1");
  Vec lambda(static_cast<std::size_t>(n)), f(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    lambda[i - 1] = 1.0 / (static_cast<double>(i) * i);
    f[i - 1] = std::pow(static_cast<double>(i), -beta);
  }
  ProblemOp op = make_linear_diag(lambda, f, kind);
  op.name = "counterexample";
  return op;
}

inline ProblemOp load_problem(const ProblemSpec& spec) {
  auto param = [&spec](const std::string& key, double fallback) {
    auto it = spec.params.find(key);
    return it == spec.params.end() ? fallback : it->second;
  };
  for (const auto& [key, value] : spec.params) {
    (void)value;
    static const std::vector<std::string> known = {"lambda_min", "lambda_max", "ball_radius", "beta",
                                                   "psi_norm",   "bilinear",   "d_min",       "d_max"};
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw SpecError("unknown problem parameter '" + key + "'");
  }

  if (spec.name == "linear-diag") {
    int n = spec.n > 0 ? spec.n : 10;
    double lo = param("lambda_min", 0.0);
    double hi = param("lambda_max", 2.0);
    Vec lambda(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      lambda[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    }
    Vec y(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) y[i] = lambda[i] > 0.0 ? 1.0 : 0.0;
    Vec f(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) f[i] = lambda[i] * y[i];
    return make_linear_diag(lambda, f, spec.norm_kind);
  }
  if (spec.name == "linear-hilbert") {
    return make_hilbert(spec.n > 0 ? spec.n : 8, spec.norm_kind);
  }
  if (spec.name == "cubic") {
    return make_cubic(spec.n > 0 ? spec.n : 1, param("ball_radius", 1.0), spec.norm_kind);
  }
  if (spec.name == "manufactured") {
    return make_manufactured(spec.n > 0 ? spec.n : 6, spec.seed, param("psi_norm", 0.05), param("bilinear", 0.05),
                             param("d_min", 0.5), param("d_max", 2.0), spec.norm_kind);
  }
  if (spec.name == "counterexample") {
    return make_counterexample(spec.n > 0 ? spec.n : 1000, param("beta", 2.0), spec.norm_kind);
  }
  throw SpecError("unknown problem '" + spec.name +
                  "' (registered: linear-diag, linear-hilbert, cubic, manufactured, counterexample)");
}

struct RegistryEntry {
  std::string name;
  int default_n;
  std::string params;
  std::string description;
};

inline std::vector<RegistryEntry> problem_registry() {
  return {
      {"linear-diag", 10, "lambda_min=0, lambda_max=2",
       "F(u) = diag(linspace(lambda_min,lambda_max)) u - f, f chosen so y = ones off the zero modes"},
      {"linear-hilbert", 8, "", "F(u) = H u - H*ones with the Hilbert matrix; severely ill-conditioned spd"},
      {"cubic", 1, "ball_radius=1", "F(u) = u + u^3 componentwise; y = 0, exact derivative bounds on B(0,R)"},
      {"manufactured", 6, "psi_norm=0.05, bilinear=0.05, d_min=0.5, d_max=2",
       "F(u) = A0 (u-y) + beta (u-y)^2 with seeded spd A0; every contraction hypothesis holds by construction"},
      {"counterexample", 1000, "beta=2",
       "F(u) = diag(1/i^2) u - f, f_i = i^-beta; beta <= 2.5 gives the divergent regime, beta > 3 a healthy source"},
  };
}

// File format: n rows of n comma-separated matrix entries, then one row with the right-hand side.
inline ProblemOp load_linear_csv(const std::string& path, NormKind kind) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<Vec> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    Vec row;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument("trailing junk");
        row.push_back(v);
      } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(lineno) + ", column " + std::to_string(col) +
                         ": non-numeric cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("line " + std::to_string(lineno) + ": ragged row, expected " +
                       std::to_string(rows.front().size()) + " cells, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("'" + path + "': no data rows");
  std::size_t n = rows.front().size();
  if (rows.size() != n + 1) {
    throw ParseError("'" + path + "': expected " + std::to_string(n) + "x" + std::to_string(n) +
                     " matrix plus one right-hand-side row, got " + std::to_string(rows.size()) + " rows of " +
                     std::to_string(n));
  }
  Matrix a(static_cast<int>(n), static_cast<int>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  }
  Vec f = rows.back();

  ProblemOp op;
  op.name = "linear-csv";
  op.dim = static_cast<int>(n);
  op.norm_kind = kind;
  op.linear = true;
  op.u0.assign(n, 0.0);
  op.eval = [a, f](const Vec& u) { return sub(matvec(a, u), f); };
  op.jac = [a](const Vec&) { return a; };
  op.analytic_m2 = 0.0;
  op.analytic_m3 = 0.0;
  return op;
}

}  // namespace dsm
