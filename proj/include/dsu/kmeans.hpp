#pragma once

// k-means under Euclidean distance (Lloyd) or cosine distance (spherical
// k-means on unit-normalized rows), seeded with k-means++.
//
// Model file layout (integers little-endian):
//
//   offset  size  field
//   0       4     magic "DSUM"
//   4       2     format version (1)
//   6       2     metric: 1 Euclidean, 2 Cosine
//   8       8     k
//   16      8     D
//   24      8*k*D row-major float64 centroids

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsu/binary_io.hpp"
#include "dsu/error.hpp"
#include "dsu/matrix.hpp"
#include "dsu/parallel.hpp"
#include "dsu/rng.hpp"

namespace dsu {

enum class Metric : std::uint16_t { Euclidean = 1, Cosine = 2 };

inline const char* metric_name(Metric m) { return m == Metric::Cosine ? "cosine" : "euclid"; }

inline Metric parse_metric(std::string_view s) {
  if (s == "euclid" || s == "euclidean") return Metric::Euclidean;
  if (s == "cosine" || s == "cos") return Metric::Cosine;
  throw ParameterError("unknown metric \"" + std::string(s) + "\" (expected euclid or cosine)");
}

struct KMeansModel {
  Matrix centroids;  // k x D; unit rows for Cosine
  Metric metric = Metric::Euclidean;

  std::size_t k() const noexcept { return centroids.rows(); }
  std::size_t dim() const noexcept { return centroids.cols(); }
};

struct KMeansOptions {
  std::size_t k = 2000;
  Metric metric = Metric::Euclidean;
  std::uint64_t seed = 0;
  int max_iters = 300;
  // Stop once every centroid moves less than tol * (RMS distance of the data
  // from its mean).
  double tol = 1e-6;
  bool record_assignments = false;
  unsigned threads = 1;
};

struct KMeansFit {
  KMeansModel model;
  // Inertia (sum of active-metric distances) at every assignment step; entry 0
  // is against the initial centroids, the last against the final ones.
  std::vector<double> inertia;
  // Assignments at every step, parallel to inertia (only when recorded).
  std::vector<std::vector<std::uint32_t>> assignment_history;
  std::vector<std::uint32_t> assignments;
  int iterations = 0;  // centroid updates performed
  bool converged = false;
};

namespace detail {

/// Distance under the active metric. Cosine inputs are unit vectors.
inline double metric_distance(Metric m, std::span<const double> x, std::span<const double> c) {
  if (m == Metric::Euclidean) return squared_distance(x, c);
  return std::max(0.0, 1.0 - dot(x, c));
}

inline Matrix normalized_rows(const Matrix& x, const char* what) {
  Matrix out = x;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    auto r = out.row(t);
    const double n = norm2(r);
    if (!(n > 0.0)) {
      throw ParameterError(std::string(what) + ": zero-norm row " + std::to_string(t) +
                           " cannot be used with the cosine metric");
    }
    for (double& v : r) v /= n;
  }
  return out;
}

inline double data_scale(const Matrix& x) {
  const auto mean = column_means(x);
  double s = 0.0;
  for (std::size_t t = 0; t < x.rows(); ++t) s += squared_distance(x.row(t), mean);
  return std::sqrt(s / static_cast<double>(x.rows()));
}

/// Nearest centroid with lowest-index tie rule. `x` is a prepared row
/// (unit-norm for Cosine). Returns (index, distance).
inline std::pair<std::uint32_t, double> nearest(const Matrix& centroids, Metric m,
                                                std::span<const double> x) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centroids.rows(); ++j) {
    const double d = metric_distance(m, x, centroids.row(j));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(j);
    }
  }
  return {best, best_d};
}

inline void assign_prepared(const Matrix& centroids, Metric m, const Matrix& x, unsigned threads,
                            std::vector<std::uint32_t>& labels, std::vector<double>& dists) {
  labels.resize(x.rows());
  dists.resize(x.rows());
  parallel_for(x.rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      std::tie(labels[t], dists[t]) = nearest(centroids, m, x.row(t));
    }
  });
}

inline double ordered_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace detail

/// k-means++ seeding on prepared data (unit rows for Cosine).
inline Matrix kmeanspp_init(const Matrix& x, std::size_t k, Metric metric, std::uint64_t seed) {
  const std::size_t n = x.rows();
  if (k == 0) throw ParameterError("k-means: k must be at least 1");
  if (k > n) {
    throw ParameterError("k-means: k=" + std::to_string(k) + " exceeds frame count " + std::to_string(n));
  }
  Rng rng(seed);
  Matrix centers(k, x.cols());
  std::size_t first = static_cast<std::size_t>(rng.index(n));
  std::copy(x.row(first).begin(), x.row(first).end(), centers.row(0).begin());

  std::vector<double> dist(n);
  for (std::size_t t = 0; t < n; ++t) dist[t] = detail::metric_distance(metric, x.row(t), centers.row(0));

  for (std::size_t c = 1; c < k; ++c) {
    const double total = detail::ordered_sum(dist);
    if (!(total > 0.0)) {
      throw ParameterError("k-means: data has fewer than k=" + std::to_string(k) + " distinct points");
    }
    const double target = rng.uniform() * total;
    double cum = 0.0;
    std::size_t pick = n;
    std::size_t last_positive = 0;
    for (std::size_t t = 0; t < n; ++t) {
      if (dist[t] <= 0.0) continue;
      last_positive = t;
      cum += dist[t];
      if (cum > target) {
        pick = t;
        break;
      }
    }
    if (pick == n) pick = last_positive;
    std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
    for (std::size_t t = 0; t < n; ++t) {
      dist[t] = std::min(dist[t], detail::metric_distance(metric, x.row(t), centers.row(c)));
    }
  }
  return centers;
}

/// Lloyd / spherical iterations from given initial centroids. For Cosine the
/// rows of x are normalized here and the initial centroids must be unit rows.
inline KMeansFit fit_kmeans_from(const FeatureMatrix& x_in, Matrix init, const KMeansOptions& opts) {
  const Metric metric = opts.metric;
  if (init.cols() != x_in.cols()) throw DimensionError("k-means: initial centroid dimension mismatch");
  if (init.rows() == 0) throw ParameterError("k-means: k must be at least 1");
  if (init.rows() > x_in.rows()) throw ParameterError("k-means: k exceeds frame count");
  if (opts.max_iters < 0) throw ParameterError("k-means: max_iters must be non-negative");
  const Matrix prepared_storage =
      metric == Metric::Cosine ? detail::normalized_rows(x_in, "fit_kmeans") : Matrix{};
  const Matrix& x = metric == Metric::Cosine ? prepared_storage : x_in;

  const std::size_t n = x.rows();
  const std::size_t k = init.rows();
  const std::size_t dim = x.cols();
  const double threshold = opts.tol * detail::data_scale(x);

  KMeansFit fit;
  Matrix centroids = std::move(init);
  std::vector<std::uint32_t> labels;
  std::vector<double> dists;

  auto assign_step = [&] {
    detail::assign_prepared(centroids, metric, x, opts.threads, labels, dists);
    fit.inertia.push_back(detail::ordered_sum(dists));
    if (opts.record_assignments) fit.assignment_history.push_back(labels);
  };

  assign_step();
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t t = 0; t < n; ++t) {
      auto s = sums.row(labels[t]);
      auto r = x.row(t);
      for (std::size_t d = 0; d < dim; ++d) s[d] += r[d];
      ++counts[labels[t]];
    }

    Matrix next(k, dim);
    std::vector<std::size_t> empty;
    for (std::size_t j = 0; j < k; ++j) {
      auto out = next.row(j);
      auto s = sums.row(j);
      if (counts[j] == 0) {
        empty.push_back(j);
        continue;
      }
      if (metric == Metric::Euclidean) {
        const double inv = 1.0 / static_cast<double>(counts[j]);
        for (std::size_t d = 0; d < dim; ++d) out[d] = s[d] * inv;
      } else {
        const double nrm = norm2(s);
        if (!(nrm > 0.0)) {
          empty.push_back(j);
          continue;
        }
        for (std::size_t d = 0; d < dim; ++d) out[d] = s[d] / nrm;
      }
    }

    if (!empty.empty()) {
      // Re-seed with the frames farthest from their current centroid.
      std::vector<std::size_t> order(n);
      for (std::size_t t = 0; t < n; ++t) order[t] = t;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return dists[a] > dists[b]; });
      for (std::size_t e = 0; e < empty.size(); ++e) {
        const auto src = x.row(order[e]);
        std::copy(src.begin(), src.end(), next.row(empty[e]).begin());
      }
    }

    double movement = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      movement = std::max(movement, std::sqrt(squared_distance(next.row(j), centroids.row(j))));
    }
    centroids = std::move(next);
    ++fit.iterations;
    assign_step();
    if (movement < threshold || movement == 0.0) {
      fit.converged = true;
      break;
    }
  }

  fit.assignments = std::move(labels);
  fit.model = KMeansModel{std::move(centroids), metric};
  return fit;
}

inline KMeansFit fit_kmeans_detailed(const FeatureMatrix& x, const KMeansOptions& opts) {
  if (opts.k == 0) throw ParameterError("k-means: k must be at least 1");
  if (opts.k > x.rows()) {
    throw ParameterError("k-means: k=" + std::to_string(opts.k) + " exceeds frame count " +
                         std::to_string(x.rows()));
  }
  if (opts.metric == Metric::Cosine) {
    const Matrix prepared = detail::normalized_rows(x, "fit_kmeans");
    return fit_kmeans_from(x, kmeanspp_init(prepared, opts.k, opts.metric, opts.seed), opts);
  }
  return fit_kmeans_from(x, kmeanspp_init(x, opts.k, opts.metric, opts.seed), opts);
}

inline KMeansModel fit_kmeans(const FeatureMatrix& x, std::size_t k, Metric metric, std::uint64_t seed,
                              int max_iters = 300, double tol = 1e-6) {
  KMeansOptions opts;
  opts.k = k;
  opts.metric = metric;
  opts.seed = seed;
  opts.max_iters = max_iters;
  opts.tol = tol;
  return fit_kmeans_detailed(x, opts).model;
}

/// Index of the nearest centroid for one frame; ties go to the lowest index.
inline std::uint32_t assign_one(const KMeansModel& m, std::span<const double> frame) {
  if (frame.size() != m.dim()) {
    throw DimensionError("assign: model has D=" + std::to_string(m.dim()) + ", frame has D=" +
                         std::to_string(frame.size()));
  }
  if (m.metric == Metric::Euclidean) return detail::nearest(m.centroids, m.metric, frame).first;
  if (!(norm2(frame) > 0.0)) throw ParameterError("assign: zero-norm frame under cosine metric");
  // argmax of the dot product is unchanged by normalizing the frame
  std::uint32_t best = 0;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m.k(); ++j) {
    const double d = dot(frame, m.centroids.row(j));
    if (d > best_dot) {
      best_dot = d;
      best = static_cast<std::uint32_t>(j);
    }
  }
  return best;
}

inline std::vector<std::uint32_t> assign(const KMeansModel& m, const FeatureMatrix& x, unsigned threads = 1) {
  if (x.cols() != m.dim()) {
    throw DimensionError("assign: model has D=" + std::to_string(m.dim()) + ", input has D=" +
                         std::to_string(x.cols()));
  }
  std::vector<std::uint32_t> out(x.rows());
  parallel_for(x.rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      try {
        out[t] = assign_one(m, x.row(t));
      } catch (const ParameterError&) {
        throw ParameterError("assign: zero-norm frame " + std::to_string(t) + " under cosine metric");
      }
    }
  });
  return out;
}

/// Sum of active-metric distances from each frame to its assigned centroid.
inline double inertia(const KMeansModel& m, const FeatureMatrix& x) {
  const Matrix prepared = m.metric == Metric::Cosine ? detail::normalized_rows(x, "inertia") : x;
  std::vector<std::uint32_t> labels;
  std::vector<double> dists;
  detail::assign_prepared(m.centroids, m.metric, prepared, 1, labels, dists);
  return detail::ordered_sum(dists);
}

// ---------------------------------------------------------------------------
// Model files

inline constexpr std::string_view kModelMagic = "DSUM";
inline constexpr std::uint16_t kModelVersion = 1;

inline std::vector<unsigned char> encode_model(const KMeansModel& m) {
  io::Writer w;
  w.put_bytes(kModelMagic);
  w.put<std::uint16_t>(kModelVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(m.metric));
  w.put<std::uint64_t>(m.k());
  w.put<std::uint64_t>(m.dim());
  w.put_doubles(m.centroids.values());
  return w.bytes();
}

inline KMeansModel decode_model(std::span<const unsigned char> bytes, const std::string& source) {
  io::Reader r(bytes, source);
  if (r.get_bytes(4, "magic") != kModelMagic) {
    throw FormatError(source + ": bad magic at byte offset 0 (expected \"DSUM\")");
  }
  if (const auto v = r.get<std::uint16_t>("version"); v != kModelVersion) {
    throw FormatError(source + ": unsupported model version " + std::to_string(v));
  }
  const auto code = r.get<std::uint16_t>("metric");
  if (code != 1 && code != 2) {
    throw FormatError(source + ": unknown metric code " + std::to_string(code) + " at byte offset 6");
  }
  const auto k = r.get<std::uint64_t>("k");
  const auto dim = r.get<std::uint64_t>("dimension");
  if (k == 0 || dim == 0) throw FormatError(source + ": empty model in header at byte offset 8");
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max() / sizeof(double);
  if (k > kMax / dim || r.remaining() != k * dim * sizeof(double)) {
    throw FormatError(source + ": centroid payload at byte offset 24 has " +
                      std::to_string(r.remaining()) + " bytes, header implies " + std::to_string(k) +
                      "x" + std::to_string(dim) + " float64");
  }
  KMeansModel m{Matrix(k, dim), static_cast<Metric>(code)};
  r.get_doubles(m.centroids.values(), "centroids");
  if (!m.centroids.all_finite()) throw FormatError(source + ": non-finite centroid value");
  return m;
}

inline void save_model(const KMeansModel& m, const std::filesystem::path& path) {
  io::write_file(path, encode_model(m));
}

inline KMeansModel load_model(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_model(bytes, path.string());
}

}  // namespace dsu
