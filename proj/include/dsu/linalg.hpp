#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "dsu/error.hpp"
#include "dsu/matrix.hpp"

namespace dsu::linalg {

/// Eigenpairs of a real symmetric matrix.
///
/// eigenvalues are sorted in descending order and column j of eigenvectors
/// belongs to eigenvalue j. Each eigenvector is signed so that its
/// largest-magnitude entry is positive (first such entry on ties).
struct SymmetricEigen {
  std::vector<double> eigenvalues;
  Matrix eigenvectors;
};

struct JacobiOptions {
  double relative_tolerance = 1e-12;  // off-diagonal Frobenius norm vs ||A||_F
  int max_sweeps = 100;
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

inline double frobenius(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

// Magnitudes within this relative distance of the column maximum count as
// tied for the sign convention, so (1,-1)/sqrt(2) is signed by its first entry
// even when rounding makes the two magnitudes differ in the last bit.
inline constexpr double kSignTieTolerance = 1e-12;

inline void canonicalize_sign(Matrix& v, std::size_t col) {
  double best = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i) best = std::max(best, std::abs(v(i, col)));
  for (std::size_t i = 0; i < v.rows(); ++i) {
    if (std::abs(v(i, col)) >= best * (1.0 - kSignTieTolerance)) {
      if (v(i, col) < 0.0) {
        for (std::size_t k = 0; k < v.rows(); ++k) v(k, col) = -v(k, col);
      }
      return;
    }
  }
}

}  // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as (A + A^T) / 2 first. Sweeps stop once the
/// off-diagonal Frobenius norm is at most relative_tolerance * ||A||_F, or
/// after max_sweeps.
inline SymmetricEigen eigh(const Matrix& input, const JacobiOptions& opts = {}) {
  if (input.rows() != input.cols()) {
    throw ParameterError("eigh: matrix is " + std::to_string(input.rows()) + "x" +
                         std::to_string(input.cols()) + ", not square");
  }
  if (!input.all_finite()) throw ParameterError("eigh: matrix has non-finite entries");

  const std::size_t n = input.rows();
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);

  const double threshold = opts.relative_tolerance * detail::frobenius(a);
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    if (detail::off_diagonal_norm(a) <= threshold) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymmetricEigen out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
    detail::canonicalize_sign(out.eigenvectors, j);
  }
  return out;
}

/// V * diag(lambda) * V^T
inline Matrix reconstruct(const SymmetricEigen& e) {
  const std::size_t n = e.eigenvalues.size();
  Matrix scaled = e.eigenvectors;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scaled(i, j) *= e.eigenvalues[j];
  return matmul_transposed(scaled, e.eigenvectors);
}

/// Solve A x = b in place by Gaussian elimination with partial pivoting.
/// Returns false when a pivot falls below pivot_tolerance times the max-abs
/// norm of its (original) row.
inline bool solve_in_place(Matrix a, std::vector<double>& b, double pivot_tolerance = 1e-12) {
  const std::size_t n = a.rows();
  std::vector<double> row_norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (double v : a.row(i)) row_norm[i] = std::max(row_norm[i], std::abs(v));

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (!(row_norm[piv] > 0.0) || !(std::abs(a(piv, k)) >= pivot_tolerance * row_norm[piv])) {
      return false;
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(b[k], b[piv]);
      std::swap(row_norm[k], row_norm[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a(k, j) * b[j];
    b[k] = s / a(k, k);
  }
  return true;
}

/// Iterative-projection row update: solve (W V) w = e_index, then rescale so
/// that w^T V w = 1.
inline std::vector<double> solve_row(const Matrix& w, const Matrix& v, std::size_t index) {
  const std::size_t n = w.rows();
  if (w.cols() != n || v.rows() != n || v.cols() != n) {
    throw DimensionError("solve_row: W and V must both be square of the same size");
  }
  if (index >= n) throw ParameterError("solve_row: component index out of range");

  std::vector<double> x(n, 0.0);
  x[index] = 1.0;
  if (!solve_in_place(matmul(w, v), x)) {
    throw NumericalError("solve_row: singular system for component " + std::to_string(index));
  }
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double vi = 0.0;
    for (std::size_t j = 0; j < n; ++j) vi += v(i, j) * x[j];
    quad += x[i] * vi;
  }
  if (!(quad > 0.0) || !std::isfinite(quad)) {
    throw NumericalError("solve_row: non-positive quadratic form for component " +
                         std::to_string(index));
  }
  const double inv = 1.0 / std::sqrt(quad);
  for (double& xi : x) xi *= inv;
  return x;
}

/// log|det A| via LU with partial pivoting; -inf when singular.
inline double log_abs_det(const Matrix& input) {
  if (input.rows() != input.cols()) throw ParameterError("log_abs_det: matrix not square");
  Matrix a = input;
  const std::size_t n = a.rows();
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) return -std::numeric_limits<double>::infinity();
    if (piv != k)
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
    acc += std::log(std::abs(a(k, k)));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return acc;
}

}  // namespace dsu::linalg
