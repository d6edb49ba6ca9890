#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "dsu/kmeans.hpp"
#include "dsu/preprocess.hpp"
#include "oracles.hpp"

using dsu::FeatureMatrix;
using dsu::KMeansModel;
using dsu::Matrix;
using dsu::Metric;

namespace {

Matrix two_clouds(std::mt19937_64& gen, std::size_t per, std::vector<int>& truth) {
  std::normal_distribution<double> nd(0.0, 0.5);
  Matrix x(2 * per, 2);
  truth.assign(2 * per, 0);
  for (std::size_t t = 0; t < 2 * per; ++t) {
    const double c = t < per ? 0.0 : 10.0;
    truth[t] = t < per ? 0 : 1;
    x(t, 0) = c + nd(gen);
    x(t, 1) = c + nd(gen);
  }
  return x;
}

Matrix mapped(const Matrix& x, const dsu::PcaTransform& p) { return dsu::apply_pca(p, x); }

double angle_deg(std::span<const double> a, double theta_deg) {
  const double th = theta_deg * std::numbers::pi / 180.0;
  const double c = (a[0] * std::cos(th) + a[1] * std::sin(th)) / dsu::norm2(a);
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST(KMeans, TwoSeparatedClouds) {
  std::mt19937_64 gen(1);
  std::vector<int> truth;
  const auto x = two_clouds(gen, 200, truth);
  const auto fit = dsu::fit_kmeans(x, 2, Metric::Euclidean, 5);
  const auto labels = dsu::assign(fit, x);
  const int first = static_cast<int>(labels[0]);
  for (std::size_t t = 0; t < x.rows(); ++t) EXPECT_EQ(labels[t] == static_cast<std::uint32_t>(first), truth[t] == 0);

  std::vector<double> m0(2, 0.0), m1(2, 0.0);
  for (std::size_t t = 0; t < 400; ++t)
    for (std::size_t d = 0; d < 2; ++d) (truth[t] ? m1 : m0)[d] += x(t, d) / 200.0;
  const auto c0 = fit.centroids.row(static_cast<std::size_t>(first));
  const auto c1 = fit.centroids.row(static_cast<std::size_t>(1 - first));
  for (std::size_t d = 0; d < 2; ++d) {
    EXPECT_NEAR(c0[d], m0[d], 0.1);
    EXPECT_NEAR(c1[d], m1[d], 0.1);
  }
}

TEST(KMeans, SingleClusterIsMean) {
  std::mt19937_64 gen(2);
  const auto x = oracle::gaussian(gen, 300, 5, 4.0);
  const auto m = dsu::fit_kmeans(x, 1, Metric::Euclidean, 0);
  const auto mean = dsu::column_means(x);
  for (std::size_t d = 0; d < 5; ++d) EXPECT_NEAR(m.centroids(0, d), mean[d], 1e-9);
}

TEST(KMeans, CosineBundles) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> jitter(0.0, 0.2);
  std::uniform_real_distribution<double> radius(0.5, 5.0);
  Matrix x(400, 2);
  for (std::size_t t = 0; t < 400; ++t) {
    const double th = (t % 2 ? 90.0 : 0.0) + jitter(gen);
    const double r = radius(gen);
    x(t, 0) = r * std::cos(th * std::numbers::pi / 180.0);
    x(t, 1) = r * std::sin(th * std::numbers::pi / 180.0);
  }
  const auto m = dsu::fit_kmeans(x, 2, Metric::Cosine, 4);
  const double a0 = std::min(angle_deg(m.centroids.row(0), 0.0), angle_deg(m.centroids.row(1), 0.0));
  const double a1 = std::min(angle_deg(m.centroids.row(0), 90.0), angle_deg(m.centroids.row(1), 90.0));
  EXPECT_LE(a0, 1.0);
  EXPECT_LE(a1, 1.0);
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(dsu::norm2(m.centroids.row(j)), 1.0, 1e-9);
}

TEST(KMeans, AssignExactAndTies) {
  const KMeansModel m{Matrix{{0, 0}, {2, 0}, {5, 5}, {-3, 1}}, Metric::Euclidean};
  EXPECT_EQ(dsu::assign_one(m, std::vector<double>{-3, 1}), 3u);
  EXPECT_EQ(dsu::assign_one(m, std::vector<double>{1, 0}), 0u);
  const KMeansModel dup{Matrix{{1, 0}, {1, 0}}, Metric::Euclidean};
  EXPECT_EQ(dsu::assign_one(dup, std::vector<double>{1, 0}), 0u);
  const KMeansModel cos{Matrix{{1, 0}, {0, 1}}, Metric::Cosine};
  EXPECT_EQ(dsu::assign_one(cos, std::vector<double>{2, 2}), 0u);
}

TEST(KMeans, BatchMatchesSingleAndThreads) {
  std::mt19937_64 gen(4);
  const auto x = oracle::gaussian(gen, 1000, 6);
  for (Metric metric : {Metric::Euclidean, Metric::Cosine}) {
    const auto m = dsu::fit_kmeans(x, 12, metric, 9, 50);
    const auto batch = dsu::assign(m, x, 1);
    EXPECT_EQ(dsu::assign(m, x, 4), batch);
    for (std::size_t t = 0; t < x.rows(); ++t) EXPECT_EQ(dsu::assign_one(m, x.row(t)), batch[t]);
  }
}

TEST(KMeans, TrainingBitwiseIndependentOfThreads) {
  std::mt19937_64 gen(5);
  const auto x = oracle::gaussian(gen, 2000, 8);
  for (Metric metric : {Metric::Euclidean, Metric::Cosine}) {
    dsu::KMeansOptions o;
    o.k = 16;
    o.metric = metric;
    o.seed = 3;
    o.threads = 1;
    const auto a = dsu::fit_kmeans_detailed(x, o);
    o.threads = 3;
    const auto b = dsu::fit_kmeans_detailed(x, o);
    EXPECT_EQ(a.model.centroids, b.model.centroids);
    EXPECT_EQ(a.inertia, b.inertia);
    const auto c = dsu::fit_kmeans_detailed(x, o);
    EXPECT_EQ(b.model.centroids, c.model.centroids);
  }
}

TEST(KMeans, InertiaNonIncreasing) {
  std::mt19937_64 gen(6);
  for (Metric metric : {Metric::Euclidean, Metric::Cosine}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto x = oracle::gaussian(gen, 600, 4);
      dsu::KMeansOptions o;
      o.k = 10;
      o.metric = metric;
      o.seed = seed;
      const auto fit = dsu::fit_kmeans_detailed(x, o);
      ASSERT_GE(fit.inertia.size(), 2u);
      for (std::size_t i = 1; i < fit.inertia.size(); ++i) EXPECT_LE(fit.inertia[i], fit.inertia[i - 1] + 1e-9);
      EXPECT_LE(fit.inertia.back(), fit.inertia.front());
      EXPECT_NEAR(dsu::inertia(fit.model, x), fit.inertia.back(), 1e-9 * fit.inertia.back());
    }
  }
}

TEST(KMeans, CentroidsDistinctAndFinite) {
  std::mt19937_64 gen(7);
  const auto x = oracle::gaussian(gen, 500, 3);
  for (Metric metric : {Metric::Euclidean, Metric::Cosine}) {
    const auto m = dsu::fit_kmeans(x, 40, metric, 1);
    EXPECT_TRUE(m.centroids.all_finite());
    std::set<std::vector<double>> unique;
    for (std::size_t j = 0; j < m.k(); ++j) unique.emplace(m.centroids.row(j).begin(), m.centroids.row(j).end());
    EXPECT_EQ(unique.size(), 40u);
  }
}

TEST(KMeans, EmptyClusterRepair) {
  // Duplicate and far-away initial centroids leave clusters empty after the
  // first assignment; repair must keep k distinct centroids.
  Matrix x(8, 1);
  for (std::size_t t = 0; t < 8; ++t) x(t, 0) = static_cast<double>(t);
  const Matrix init{{0.0}, {0.0}, {100.0}};
  dsu::KMeansOptions o;
  o.k = 3;
  o.record_assignments = true;
  const auto fit = dsu::fit_kmeans_from(x, init, o);
  std::set<double> unique;
  for (std::size_t j = 0; j < 3; ++j) unique.insert(fit.model.centroids(j, 0));
  EXPECT_EQ(unique.size(), 3u);
  std::set<std::uint32_t> used(fit.assignments.begin(), fit.assignments.end());
  EXPECT_EQ(used.size(), 3u);
  // Farthest frame from its centroid after the first step is frame 7.
  EXPECT_EQ(fit.assignment_history[1][7], 1u);
}

TEST(KMeans, EuclideanInvariantUnderCenteringAndRotation) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = oracle::gaussian(gen, 500, 6, 2.0);
    const auto pca = dsu::fit_pca(x);
    const auto init = dsu::kmeanspp_init(x, 5, Metric::Euclidean, static_cast<std::uint64_t>(trial));
    dsu::KMeansOptions o;
    o.k = 5;
    o.record_assignments = true;
    const auto a = dsu::fit_kmeans_from(x, init, o);
    const auto b = dsu::fit_kmeans_from(mapped(x, pca), mapped(init, pca), o);
    EXPECT_EQ(a.assignment_history, b.assignment_history);
    EXPECT_EQ(a.assignments, b.assignments);
  }
}

TEST(KMeans, CosineScaleInvariance) {
  std::mt19937_64 gen(9);
  const auto x = oracle::gaussian(gen, 400, 5);
  const auto m = dsu::fit_kmeans(x, 7, Metric::Cosine, 2);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  Matrix y = x;
  for (std::size_t t = 0; t < y.rows(); ++t) {
    const double s = scale(gen);
    for (double& v : y.row(t)) v *= s;
  }
  EXPECT_EQ(dsu::assign(m, x), dsu::assign(m, y));
}

TEST(KMeans, Rejections) {
  const FeatureMatrix x{{1, 0}, {0, 1}, {0, 0}};
  EXPECT_THROW(dsu::fit_kmeans(x, 4, Metric::Euclidean, 0), dsu::ParameterError);
  EXPECT_THROW(dsu::fit_kmeans(x, 0, Metric::Euclidean, 0), dsu::ParameterError);
  try {
    dsu::fit_kmeans(x, 2, Metric::Cosine, 0);
    FAIL() << "expected zero-norm rejection";
  } catch (const dsu::ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
  const FeatureMatrix same{{1, 1}, {1, 1}, {1, 1}};
  EXPECT_THROW(dsu::fit_kmeans(same, 2, Metric::Euclidean, 0), dsu::ParameterError);
  const KMeansModel m{Matrix{{1, 0}}, Metric::Cosine};
  EXPECT_THROW(dsu::assign(m, FeatureMatrix{{1, 0, 0}}), dsu::DimensionError);
  EXPECT_THROW(dsu::assign(m, FeatureMatrix{{0, 0}}), dsu::ParameterError);
  EXPECT_THROW(dsu::parse_metric("manhattan"), dsu::ParameterError);
}

TEST(ModelFile, RoundTripAndAssign) {
  std::mt19937_64 gen(10);
  const auto x = oracle::gaussian(gen, 300, 4, 3.0);
  oracle::TempDir dir;
  for (Metric metric : {Metric::Euclidean, Metric::Cosine}) {
    const auto m = dsu::fit_kmeans(x, 6, metric, 1);
    dsu::save_model(m, dir / "m.dsum");
    const auto back = dsu::load_model(dir / "m.dsum");
    EXPECT_EQ(back.metric, metric);
    EXPECT_EQ(back.centroids, m.centroids);
    EXPECT_EQ(dsu::assign(back, x), dsu::assign(m, x));
  }
}

TEST(ModelFile, EuclideanCentroidsNotRenormalized) {
  oracle::TempDir dir;
  const KMeansModel m{Matrix{{10, 0}, {0, 0.1}}, Metric::Euclidean};
  dsu::save_model(m, dir / "e.dsum");
  const auto back = dsu::load_model(dir / "e.dsum");
  EXPECT_EQ(back.centroids(0, 0), 10.0);
  EXPECT_EQ(dsu::assign_one(back, std::vector<double>{0, 1}), 1u);
}

TEST(ModelFile, CorruptLengthAndMagic) {
  const KMeansModel m{Matrix{{1, 2}, {3, 4}}, Metric::Euclidean};
  auto b = dsu::encode_model(m);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "DSUM");
  auto bad_k = b;
  bad_k[8] = 3;
  EXPECT_THROW(dsu::decode_model(bad_k, "mem"), dsu::FormatError);
  auto short_payload = b;
  short_payload.pop_back();
  EXPECT_THROW(dsu::decode_model(short_payload, "mem"), dsu::FormatError);
  auto bad_magic = b;
  bad_magic[3] = 'K';
  EXPECT_THROW(dsu::decode_model(bad_magic, "mem"), dsu::FormatError);
  auto bad_metric = b;
  bad_metric[6] = 7;
  EXPECT_THROW(dsu::decode_model(bad_metric, "mem"), dsu::FormatError);
}
