#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dsm/errors.hpp"

namespace dsm {

using Vec = std::vector<double>;

enum class NormKind { L1, L2, Linf };

inline NormKind dual(NormKind kind) {
  switch (kind) {
    case NormKind::L1:
      return NormKind::Linf;
    case NormKind::Linf:
      return NormKind::L1;
    default:
      return NormKind::L2;
  }
}

inline std::string to_string(NormKind kind) {
  switch (kind) {
    case NormKind::L1:
      return "l1";
    case NormKind::L2:
      return "l2";
    default:
      return "linf";
  }
}

inline NormKind norm_kind_from_string(const std::string& s) {
  if (s == "l1") return NormKind::L1;
  if (s == "l2") return NormKind::L2;
  if (s == "linf") return NormKind::Linf;
  throw InputError("unknown norm kind '" + s + "' (expected l1, l2 or linf)");
}

inline void check_finite(const Vec& v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw InputError(std::string(what) + ": non-finite coordinate at index " + std::to_string(i));
    }
  }
}

inline double norm(const Vec& v, NormKind kind) {
  check_finite(v, "norm");
  double acc = 0.0;
  switch (kind) {
    case NormKind::L1:
      for (double x : v) acc += std::abs(x);
      return acc;
    case NormKind::L2: {
      // scaled form: x*x underflows for tiny components and overflows for huge ones
      double scale = 0.0;
      for (double x : v) scale = std::max(scale, std::abs(x));
      if (scale == 0.0) return 0.0;
      for (double x : v) {
        double r = x / scale;
        acc += r * r;
      }
      return scale * std::sqrt(acc);
    }
    default:
      for (double x : v) acc = std::max(acc, std::abs(x));
      return acc;
  }
}

inline double dual_pair(const Vec& h, const Vec& u) {
  if (h.size() != u.size()) {
    throw InputError("dual_pair: dimension mismatch (" + std::to_string(h.size()) + " vs " +
                     std::to_string(u.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * u[i];
  return acc;
}

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Vec matvec(const Matrix& m, const Vec& v) {
  if (static_cast<std::size_t>(m.cols) != v.size()) {
    throw InputError("matvec: dimension mismatch");
  }
  Vec out(static_cast<std::size_t>(m.rows), 0.0);
  for (int i = 0; i < m.rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < m.cols; ++j) acc += m(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

inline Vec matvec_transposed(const Matrix& m, const Vec& v) {
  if (static_cast<std::size_t>(m.rows) != v.size()) {
    throw InputError("matvec_transposed: dimension mismatch");
  }
  Vec out(static_cast<std::size_t>(m.cols), 0.0);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) out[j] += m(i, j) * v[i];
  }
  return out;
}

// Largest singular value by power iteration on M^T M (two mat-vecs per pass, the product matrix
// is never formed). Deterministic all-ones start; relative tolerance 1e-10. The cap is sized for
// clustered spectra: a tied-to-1e-3 pair needs ~2e4 passes before the estimate stagnates.
inline double spectral_norm_power(const Matrix& m) {
  const int n = m.cols;
  if (n == 0) return 0.0;
  Vec v(static_cast<std::size_t>(n), 1.0 / std::sqrt(static_cast<double>(n)));
  double s_prev = -1.0;
  for (int iter = 0; iter < 200000; ++iter) {
    Vec w = matvec(m, v);
    Vec y = matvec_transposed(m, w);
    double s2 = dual_pair(v, y);  // = ||M v||^2 for unit v
    double s = std::sqrt(std::max(s2, 0.0));
    double ynorm = norm(y, NormKind::L2);
    if (ynorm == 0.0) return 0.0;
    if (iter > 0 && std::abs(s - s_prev) <= 1e-10 * std::max(s, 1e-300)) return s;
    s_prev = s;
    for (int i = 0; i < n; ++i) v[i] = y[i] / ynorm;
  }
  throw NumericError("spectral norm power iteration did not converge within 200000 iterations", v);
}

inline double induced_matrix_norm(const Matrix& m, NormKind kind) {
  if (m.rows != m.cols) throw InputError("induced_matrix_norm: matrix must be square");
  check_finite(m.a, "induced_matrix_norm");
  switch (kind) {
    case NormKind::L1: {
      double best = 0.0;
      for (int j = 0; j < m.cols; ++j) {
        double col = 0.0;
        for (int i = 0; i < m.rows; ++i) col += std::abs(m(i, j));
        best = std::max(best, col);
      }
      return best;
    }
    case NormKind::Linf: {
      double best = 0.0;
      for (int i = 0; i < m.rows; ++i) {
        double row = 0.0;
        for (int j = 0; j < m.cols; ++j) row += std::abs(m(i, j));
        best = std::max(best, row);
      }
      return best;
    }
    default:
      return spectral_norm_power(m);
  }
}

inline Vec add_scaled(const Vec& a, double s, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
  return out;
}

inline Vec sub(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vec scaled(const Vec& a, double s) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

}  // namespace dsm
