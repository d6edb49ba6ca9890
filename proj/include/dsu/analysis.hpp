#pragma once

// Centroid geometry and interpretability reports: pairwise centroid cosine
// similarity histograms, nearest labeled segments per centroid, and the
// extreme labeled segments along each ICA component.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dsu/data.hpp"
#include "dsu/error.hpp"
#include "dsu/kmeans.hpp"
#include "dsu/matrix.hpp"
#include "dsu/preprocess.hpp"

namespace dsu {

struct SimilarityHistogram {
  std::vector<double> bin_edges;  // bins + 1 ascending edges over [-1, 1]
  std::vector<std::uint64_t> counts;
  double mean_similarity = 0.0;
};

inline SimilarityHistogram centroid_similarity(const Matrix& centroids, std::size_t bins = 50) {
  const std::size_t k = centroids.rows();
  if (k < 2) throw ParameterError("centroid_similarity: need at least 2 centroids");
  if (bins < 1) throw ParameterError("centroid_similarity: need at least 1 bin");

  std::vector<double> norms(k);
  for (std::size_t i = 0; i < k; ++i) {
    norms[i] = norm2(centroids.row(i));
    if (!(norms[i] > 0.0)) throw ParameterError("centroid_similarity: zero-norm centroid " + std::to_string(i));
  }

  SimilarityHistogram h;
  h.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.bin_edges[b] = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
  }
  h.bin_edges.back() = 1.0;
  h.counts.assign(bins, 0);

  double sum = 0.0;
  std::uint64_t pairs = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double s = std::clamp(dot(centroids.row(i), centroids.row(j)) / (norms[i] * norms[j]), -1.0, 1.0);
      auto b = static_cast<std::size_t>(std::floor((s + 1.0) * 0.5 * static_cast<double>(bins)));
      b = std::min(b, bins - 1);
      ++h.counts[b];
      sum += s;
      ++pairs;
    }
  }
  h.mean_similarity = sum / static_cast<double>(pairs);
  return h;
}

inline SimilarityHistogram centroid_similarity(const KMeansModel& m, std::size_t bins = 50) {
  return centroid_similarity(m.centroids, bins);
}

// ---------------------------------------------------------------------------
// Labeled pools

struct PooledSegment {
  std::string label;
  std::vector<double> vector;
};

/// Mean of each segment's frame rows, paired with its label.
inline std::vector<PooledSegment> pooled_segments(const std::map<std::string, FeatureMatrix>& features,
                                                  std::span<const LabeledSegment> segments) {
  std::vector<PooledSegment> out;
  out.reserve(segments.size());
  for (const auto& s : segments) {
    auto it = features.find(s.utterance_id);
    if (it == features.end()) throw DataError("pooled_segments: no features for utterance " + s.utterance_id);
    const auto& x = it->second;
    if (s.start_frame >= s.end_frame || s.end_frame > x.rows()) {
      throw DataError("pooled_segments: segment " + s.utterance_id + "[" + std::to_string(s.start_frame) +
                      "," + std::to_string(s.end_frame) + ") out of range for " +
                      std::to_string(x.rows()) + " frames");
    }
    std::vector<double> mean(x.cols(), 0.0);
    for (std::size_t t = s.start_frame; t < s.end_frame; ++t) {
      auto r = x.row(t);
      for (std::size_t d = 0; d < x.cols(); ++d) mean[d] += r[d];
    }
    const double inv = 1.0 / static_cast<double>(s.end_frame - s.start_frame);
    for (double& v : mean) v *= inv;
    out.push_back({s.label, std::move(mean)});
  }
  return out;
}

/// Pool vectors stacked as rows.
inline Matrix pool_matrix(std::span<const PooledSegment> pool) {
  if (pool.empty()) return {};
  Matrix m(pool.size(), pool.front().vector.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].vector.size() != m.cols()) throw DimensionError("pool vectors differ in dimension");
    std::copy(pool[i].vector.begin(), pool[i].vector.end(), m.row(i).begin());
  }
  return m;
}

struct LabelCount {
  std::string label;
  std::size_t count = 0;

  friend bool operator==(const LabelCount&, const LabelCount&) = default;
};

struct Neighbor {
  std::size_t pool_index = 0;
  std::string label;
  double score = 0.0;  // distance for centroids, coordinate value for components
};

namespace detail {

/// Label counts, most frequent first, ties alphabetical.
inline std::vector<LabelCount> tally(const std::vector<Neighbor>& ns) {
  std::map<std::string, std::size_t> counts;
  for (const auto& n : ns) ++counts[n.label];
  std::vector<LabelCount> out;
  for (auto& [label, c] : counts) out.push_back({label, c});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.count > b.count; });
  return out;
}

}  // namespace detail

struct CentroidNeighbors {
  std::size_t centroid = 0;
  std::vector<Neighbor> neighbors;  // nearest first
  std::vector<LabelCount> labels;
  bool pure = false;  // all neighbors share one label
};

struct NeighborReport {
  std::vector<CentroidNeighbors> centroids;
};

/// The m nearest pooled vectors of every centroid under the model's metric.
/// Equal distances are ordered by pool index.
inline NeighborReport nearest_to_centroids(const KMeansModel& model, std::span<const PooledSegment> pool,
                                           std::size_t m_neighbors = 10) {
  if (pool.empty()) throw ParameterError("nearest_to_centroids: empty pool");
  if (m_neighbors < 1) throw ParameterError("nearest_to_centroids: m_neighbors must be at least 1");
  if (m_neighbors > pool.size()) {
    throw ParameterError("nearest_to_centroids: m_neighbors=" + std::to_string(m_neighbors) +
                         " exceeds pool size " + std::to_string(pool.size()));
  }
  Matrix vectors = pool_matrix(pool);
  if (vectors.cols() != model.dim()) {
    throw DimensionError("nearest_to_centroids: pool D=" + std::to_string(vectors.cols()) + ", model D=" +
                         std::to_string(model.dim()));
  }
  if (model.metric == Metric::Cosine) vectors = detail::normalized_rows(vectors, "nearest_to_centroids");
  Matrix centroids = model.centroids;
  if (model.metric == Metric::Cosine) centroids = detail::normalized_rows(centroids, "nearest_to_centroids");

  NeighborReport report;
  std::vector<std::pair<double, std::size_t>> scored(pool.size());
  for (std::size_t c = 0; c < model.k(); ++c) {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      double d = detail::metric_distance(model.metric, vectors.row(i), centroids.row(c));
      if (model.metric == Metric::Euclidean) d = std::sqrt(d);
      scored[i] = {d, i};
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(m_neighbors), scored.end());
    CentroidNeighbors entry;
    entry.centroid = c;
    for (std::size_t r = 0; r < m_neighbors; ++r) {
      entry.neighbors.push_back({scored[r].second, pool[scored[r].second].label, scored[r].first});
    }
    entry.labels = detail::tally(entry.neighbors);
    entry.pure = entry.labels.size() == 1;
    report.centroids.push_back(std::move(entry));
  }
  return report;
}

struct ComponentExtremes {
  std::size_t component = 0;
  std::vector<Neighbor> top;     // largest coordinate first
  std::vector<Neighbor> bottom;  // smallest coordinate first
  std::vector<LabelCount> top_labels;
  std::vector<LabelCount> bottom_labels;
  bool top_pure = false;
  bool bottom_pure = false;
};

/// For each ICA component, the m_top pooled vectors with the largest and
/// smallest transformed coordinate. Equal values are ordered by pool index.
inline std::vector<ComponentExtremes> component_extremes(const IcaTransform& t,
                                                         std::span<const PooledSegment> pool,
                                                         std::size_t m_top = 5) {
  if (pool.empty()) throw ParameterError("component_extremes: empty pool");
  if (m_top < 1) throw ParameterError("component_extremes: m_top must be at least 1");
  if (m_top > pool.size()) {
    throw ParameterError("component_extremes: m_top=" + std::to_string(m_top) + " exceeds pool size " +
                         std::to_string(pool.size()));
  }
  const Matrix coords = apply_ica(t, pool_matrix(pool));
  std::vector<ComponentExtremes> out;
  std::vector<std::size_t> order(pool.size());
  for (std::size_t d = 0; d < coords.cols(); ++d) {
    ComponentExtremes e;
    e.component = d;
    auto take = [&](auto better, std::vector<Neighbor>& dest) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m_top), order.end(),
                        [&](std::size_t a, std::size_t b) {
                          const double va = coords(a, d);
                          const double vb = coords(b, d);
                          if (va != vb) return better(va, vb);
                          return a < b;
                        });
      for (std::size_t r = 0; r < m_top; ++r) dest.push_back({order[r], pool[order[r]].label, coords(order[r], d)});
    };
    take(std::greater<double>{}, e.top);
    take(std::less<double>{}, e.bottom);
    e.top_labels = detail::tally(e.top);
    e.bottom_labels = detail::tally(e.bottom);
    e.top_pure = e.top_labels.size() == 1;
    e.bottom_pure = e.bottom_labels.size() == 1;
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline std::string histogram_csv(const SimilarityHistogram& h) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out += detail::fmt_real(h.bin_edges[b]) + ',' + detail::fmt_real(h.bin_edges[b + 1]) + ',' +
           std::to_string(h.counts[b]) + '\n';
  }
  return out;
}

inline std::string neighbors_csv(const NeighborReport& r) {
  std::string out = "centroid,rank,label,distance\n";
  for (const auto& c : r.centroids) {
    for (std::size_t i = 0; i < c.neighbors.size(); ++i) {
      out += std::to_string(c.centroid) + ',' + std::to_string(i) + ',' + detail::csv_field(c.neighbors[i].label) +
             ',' + detail::fmt_real(c.neighbors[i].score) + '\n';
    }
  }
  return out;
}

inline std::string extremes_csv(const std::vector<ComponentExtremes>& ex) {
  std::string out = "component,direction,rank,label,value\n";
  for (const auto& e : ex) {
    auto emit = [&](const char* dir, const std::vector<Neighbor>& ns) {
      for (std::size_t i = 0; i < ns.size(); ++i) {
        out += std::to_string(e.component) + ',' + dir + ',' + std::to_string(i) + ',' +
               detail::csv_field(ns[i].label) + ',' + detail::fmt_real(ns[i].score) + '\n';
      }
    };
    emit("top", e.top);
    emit("bottom", e.bottom);
  }
  return out;
}

}  // namespace dsu
