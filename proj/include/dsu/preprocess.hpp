#pragma once

// Linear preprocessing transforms fitted on frame features: standardization,
// PCA, whitening and ICA. Fitting ICA lives in dsu/ica.hpp; file I/O in
// dsu/transform_io.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "dsu/error.hpp"
#include "dsu/linalg.hpp"
#include "dsu/matrix.hpp"

namespace dsu {

enum class TransformKind : std::uint16_t { Standardize = 1, Pca = 2, Whiten = 3, Ica = 4 };

inline constexpr double kStdFloor = 1e-12;
// Whitening suppresses eigen-directions below this fraction of the largest eigenvalue.
inline constexpr double kWhitenRelativeFloor = 1e-10;

struct StandardizeTransform {
  std::vector<double> mean;
  std::vector<double> std;  // floored at kStdFloor

  std::size_t dim() const noexcept { return mean.size(); }
};

struct PcaTransform {
  std::vector<double> mean;
  Matrix basis;                     // columns are eigenvectors of the covariance
  std::vector<double> eigenvalues;  // descending, clamped at 0

  std::size_t dim() const noexcept { return mean.size(); }
};

struct WhitenTransform {
  PcaTransform pca;
  std::vector<double> scale;  // eigenvalue^(-1/2), 0 for suppressed directions

  std::size_t dim() const noexcept { return pca.dim(); }

  /// Number of retained (non-suppressed) leading components.
  std::size_t retained() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(scale.begin(), scale.end(), [](double s) { return s != 0.0; }));
  }
};

struct IcaTransform {
  WhitenTransform whiten;
  // D x D. Acts on the retained block of whitened coordinates; suppressed
  // coordinates carry an identity block.
  Matrix demixing;

  std::size_t dim() const noexcept { return whiten.dim(); }
};

using Transform = std::variant<StandardizeTransform, PcaTransform, WhitenTransform, IcaTransform>;

namespace detail {

inline void check_dim(std::size_t expected, const FeatureMatrix& x, const char* what) {
  if (x.cols() != expected) {
    throw DimensionError(std::string(what) + ": transform fitted for D=" + std::to_string(expected) +
                         ", input has D=" + std::to_string(x.cols()));
  }
}

inline void require_rows(const FeatureMatrix& x, std::size_t n, const char* what) {
  if (x.rows() < n) {
    throw ParameterError(std::string(what) + ": needs at least " + std::to_string(n) +
                         " frames, got " + std::to_string(x.rows()));
  }
  if (x.cols() == 0) throw ParameterError(std::string(what) + ": zero feature dimension");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Standardization

inline StandardizeTransform fit_standardize(const FeatureMatrix& x) {
  detail::require_rows(x, 2, "fit_standardize");
  StandardizeTransform t;
  t.mean = column_means(x);
  t.std.assign(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t d = 0; d < x.cols(); ++d) {
      const double c = row[d] - t.mean[d];
      t.std[d] += c * c;
    }
  }
  for (double& s : t.std) {
    s = std::max(std::sqrt(s / static_cast<double>(x.rows() - 1)), kStdFloor);
  }
  return t;
}

inline FeatureMatrix apply_standardize(const StandardizeTransform& t, const FeatureMatrix& x) {
  detail::check_dim(t.dim(), x, "apply_standardize");
  FeatureMatrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    for (std::size_t d = 0; d < x.cols(); ++d) o[d] = (in[d] - t.mean[d]) / t.std[d];
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCA

inline PcaTransform fit_pca(const FeatureMatrix& x) {
  detail::require_rows(x, 2, "fit_pca");
  PcaTransform t;
  t.mean = column_means(x);
  auto eig = linalg::eigh(sample_covariance(x));
  t.basis = std::move(eig.eigenvectors);
  t.eigenvalues = std::move(eig.eigenvalues);
  for (double& l : t.eigenvalues) l = std::max(l, 0.0);
  return t;
}

/// (x - mean) * basis
inline FeatureMatrix apply_pca(const PcaTransform& t, const FeatureMatrix& x) {
  detail::check_dim(t.dim(), x, "apply_pca");
  const std::size_t dim = t.dim();
  FeatureMatrix out(x.rows(), dim);
  std::vector<double> centered(dim);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    for (std::size_t d = 0; d < dim; ++d) centered[d] = in[d] - t.mean[d];
    auto o = out.row(r);
    for (std::size_t d = 0; d < dim; ++d) {
      const double c = centered[d];
      if (c == 0.0) continue;
      auto b = t.basis.row(d);
      for (std::size_t j = 0; j < dim; ++j) o[j] += c * b[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whitening

inline WhitenTransform whiten_from_pca(PcaTransform pca) {
  const double largest = pca.eigenvalues.empty() ? 0.0 : pca.eigenvalues.front();
  if (!(largest > 0.0)) throw NumericalError("fit_whiten: rank-0 data (all eigenvalues are zero)");
  WhitenTransform t;
  t.scale.resize(pca.dim());
  for (std::size_t d = 0; d < pca.dim(); ++d) {
    const double l = pca.eigenvalues[d];
    t.scale[d] = l >= kWhitenRelativeFloor * largest ? 1.0 / std::sqrt(l) : 0.0;
  }
  t.pca = std::move(pca);
  return t;
}

inline WhitenTransform fit_whiten(const FeatureMatrix& x) { return whiten_from_pca(fit_pca(x)); }

inline FeatureMatrix apply_whiten(const WhitenTransform& t, const FeatureMatrix& x) {
  detail::check_dim(t.dim(), x, "apply_whiten");
  FeatureMatrix out = apply_pca(t.pca, x);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t d = 0; d < o.size(); ++d) o[d] *= t.scale[d];
  }
  return out;
}

// ---------------------------------------------------------------------------
// ICA (application only; see dsu/ica.hpp for fitting)

/// whiten(x) * demixing^T
inline FeatureMatrix apply_ica(const IcaTransform& t, const FeatureMatrix& x) {
  detail::check_dim(t.dim(), x, "apply_ica");
  return matmul_transposed(apply_whiten(t.whiten, x), t.demixing);
}

inline FeatureMatrix apply_transform(const Transform& t, const FeatureMatrix& x) {
  return std::visit(
      [&](const auto& tr) {
        using T = std::decay_t<decltype(tr)>;
        if constexpr (std::is_same_v<T, StandardizeTransform>) return apply_standardize(tr, x);
        else if constexpr (std::is_same_v<T, PcaTransform>) return apply_pca(tr, x);
        else if constexpr (std::is_same_v<T, WhitenTransform>) return apply_whiten(tr, x);
        else return apply_ica(tr, x);
      },
      t);
}

inline std::size_t dim(const Transform& t) {
  return std::visit([](const auto& tr) { return tr.dim(); }, t);
}

inline TransformKind kind(const Transform& t) {
  return static_cast<TransformKind>(t.index() + 1);
}

inline const char* kind_name(TransformKind k) {
  switch (k) {
    case TransformKind::Standardize: return "std";
    case TransformKind::Pca: return "pca";
    case TransformKind::Whiten: return "whiten";
    case TransformKind::Ica: return "ica";
  }
  return "unknown";
}

}  // namespace dsu
