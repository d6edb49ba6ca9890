#pragma once

// Maximum-likelihood ICA under a standard Laplace source model, optimized with
// the auxiliary-function method and iterative-projection (IP) row updates.
//
// For whitened frames z_t and demixing W with rows w_d, the log-likelihood is
//
//   L(W) = -sum_{t,d} |w_d . z_t| - T*D*log 2 + T*log|det W|
//
// One IP iteration visits each component d, builds the weighted covariance
//
//   V_d = (1/T) sum_t z_t z_t^T / max(|w_d . z_t|, 1e-9)
//
// and replaces w_d by the minimizer of the auxiliary bound, (W V_d)^{-1} e_d
// rescaled to w_d^T V_d w_d = 1. Each row update cannot decrease L.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "dsu/error.hpp"
#include "dsu/linalg.hpp"
#include "dsu/matrix.hpp"
#include "dsu/preprocess.hpp"

namespace dsu {

inline constexpr double kIcaActivationFloor = 1e-9;

struct IcaOptions {
  int iterations = 100;
  // Accepted for interface stability; the demixing always starts from the
  // identity, so fitting consumes no randomness.
  std::uint64_t seed = 0;
  bool keep_sources = false;
};

struct IcaFit {
  IcaTransform transform;
  // Entry 0 is the identity start; entry i is after iteration i.
  std::vector<double> log_likelihood;
  // w_d^T V_d w_d for each row against the V_d of its last update.
  std::vector<double> row_quadratic_forms;
  // Separated components of the fit data (T x D), when keep_sources is set.
  Matrix sources;
};

namespace detail {

// Neumaier-compensated running sum. The likelihood is a sum of T*D terms and
// the monotonicity check compares consecutive values at 1e-9 absolute.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

/// Laplace-model log-likelihood of whitened frames z (T x r) under demixing w (r x r).
inline double ica_log_likelihood(const Matrix& z, const Matrix& w) {
  const double log_det = linalg::log_abs_det(w);
  if (!std::isfinite(log_det)) throw NumericalError("ica: demixing matrix is singular");
  detail::CompensatedSum abs_sum;
  for (std::size_t t = 0; t < z.rows(); ++t) {
    auto zt = z.row(t);
    for (std::size_t d = 0; d < w.rows(); ++d) abs_sum.add(std::abs(dot(w.row(d), zt)));
  }
  const double frames = static_cast<double>(z.rows());
  const double comps = static_cast<double>(w.rows());
  return -abs_sum.value() - frames * comps * std::numbers::ln2 + frames * log_det;
}

/// Weighted covariance (1/T) sum_t z_t z_t^T / max(|w . z_t|, floor).
inline Matrix auxiliary_covariance(const Matrix& z, std::span<const double> w) {
  const std::size_t r = z.cols();
  Matrix v(r, r);
  for (std::size_t t = 0; t < z.rows(); ++t) {
    auto zt = z.row(t);
    const double weight = 1.0 / std::max(std::abs(dot(w, zt)), kIcaActivationFloor);
    for (std::size_t i = 0; i < r; ++i) {
      const double wi = weight * zt[i];
      auto out = v.row(i);
      for (std::size_t j = i; j < r; ++j) out[j] += wi * zt[j];
    }
  }
  const double inv_t = 1.0 / static_cast<double>(z.rows());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i; j < r; ++j) {
      v(i, j) *= inv_t;
      v(j, i) = v(i, j);
    }
  }
  return v;
}

struct DemixingFit {
  Matrix demixing;
  std::vector<double> log_likelihood;
  std::vector<double> row_quadratic_forms;
};

/// Run `iterations` IP sweeps on whitened frames starting from the identity.
inline DemixingFit fit_demixing(const Matrix& z, int iterations) {
  if (iterations < 1) throw ParameterError("ica: iteration count must be at least 1");
  const std::size_t r = z.cols();
  DemixingFit fit;
  fit.demixing = Matrix::identity(r);
  fit.row_quadratic_forms.assign(r, 0.0);
  fit.log_likelihood.reserve(static_cast<std::size_t>(iterations) + 1);
  fit.log_likelihood.push_back(ica_log_likelihood(z, fit.demixing));

  Matrix& w = fit.demixing;
  for (int it = 1; it <= iterations; ++it) {
    for (std::size_t d = 0; d < r; ++d) {
      const Matrix v = auxiliary_covariance(z, w.row(d));
      std::vector<double> row;
      try {
        row = linalg::solve_row(w, v, d);
      } catch (const NumericalError& e) {
        throw NumericalError("ica iteration " + std::to_string(it) + ", component " +
                             std::to_string(d) + ": " + e.what());
      }
      std::copy(row.begin(), row.end(), w.row(d).begin());
      double quad = 0.0;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) quad += row[i] * v(i, j) * row[j];
      fit.row_quadratic_forms[d] = quad;
    }
    fit.log_likelihood.push_back(ica_log_likelihood(z, w));
  }
  return fit;
}

/// Fit whitening on x, then the demixing matrix on the retained whitened dimensions.
inline IcaFit fit_ica_detailed(const FeatureMatrix& x, const IcaOptions& opts = {}) {
  if (opts.iterations < 1) throw ParameterError("fit_ica: iteration count must be at least 1");
  IcaFit out;
  WhitenTransform whiten = fit_whiten(x);
  const Matrix whitened = apply_whiten(whiten, x);
  const std::size_t dim = whiten.dim();
  const std::size_t r = whiten.retained();

  Matrix z(whitened.rows(), r);
  for (std::size_t t = 0; t < z.rows(); ++t) {
    auto src = whitened.row(t);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(r), z.row(t).begin());
  }

  DemixingFit fit = fit_demixing(z, opts.iterations);

  Matrix demixing = Matrix::identity(dim);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) demixing(i, j) = fit.demixing(i, j);

  out.transform = IcaTransform{std::move(whiten), std::move(demixing)};
  out.log_likelihood = std::move(fit.log_likelihood);
  out.row_quadratic_forms = std::move(fit.row_quadratic_forms);
  if (opts.keep_sources) out.sources = matmul_transposed(whitened, out.transform.demixing);
  return out;
}

inline IcaTransform fit_ica(const FeatureMatrix& x, int iterations = 100, std::uint64_t seed = 0) {
  return fit_ica_detailed(x, IcaOptions{iterations, seed, false}).transform;
}

}  // namespace dsu
