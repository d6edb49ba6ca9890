#pragma once

// Independent reference computations for tests. Nothing here calls into the
// library's numerical code paths.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "dsu/matrix.hpp"

namespace oracle {

using dsu::Matrix;

inline Matrix gaussian(std::mt19937_64& gen, std::size_t rows, std::size_t cols, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = nd(gen);
  return m;
}

inline Matrix laplace(std::mt19937_64& gen, std::size_t rows, std::size_t cols) {
  std::exponential_distribution<double> ex(1.0);
  std::bernoulli_distribution coin(0.5);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = coin(gen) ? ex(gen) : -ex(gen);
  return m;
}

inline Matrix random_symmetric(std::mt19937_64& gen, std::size_t n) {
  Matrix a = gaussian(gen, n, n);
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

/// Modified Gram-Schmidt on a Gaussian matrix.
inline Matrix random_orthogonal(std::mt19937_64& gen, std::size_t n) {
  Matrix q = gaussian(gen, n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < j; ++p) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += q(i, j) * q(i, p);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, p);
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += q(i, j) * q(i, j);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= nrm;
  }
  return q;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Matrix naive_covariance(const Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(t, j) / static_cast<double>(n);
  Matrix c(d, d);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) c(i, j) += (x(t, i) - mean[i]) * (x(t, j) - mean[j]);
  for (double& v : c.values()) v /= static_cast<double>(n - 1);
  return c;
}

/// Amari index of a square matrix, normalized to [0, 1]; 0 iff a scaled permutation.
inline double amari_index(const Matrix& p) {
  const std::size_t n = p.rows();
  double rows = 0.0, cols = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = 0.0, sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      mx = std::max(mx, std::abs(p(i, j)));
      sum += std::abs(p(i, j));
    }
    rows += sum / mx - 1.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    double mx = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx = std::max(mx, std::abs(p(i, j)));
      sum += std::abs(p(i, j));
    }
    cols += sum / mx - 1.0;
  }
  return (rows + cols) / (2.0 * static_cast<double>(n) * static_cast<double>(n - 1));
}

inline double correlation(const Matrix& a, std::size_t ca, const Matrix& b, std::size_t cb) {
  const std::size_t n = a.rows();
  double ma = 0.0, mb = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    ma += a(t, ca);
    mb += b(t, cb);
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = a(t, ca) - ma, y = b(t, cb) - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  return sab / std::sqrt(saa * sbb);
}

struct SignedPermutation {
  std::vector<std::size_t> perm;  // estimated column perm[i] matches reference column i
  std::vector<double> signs;
  std::vector<double> abs_corr;   // |correlation| per reference column
};

/// Exhaustive search over permutations maximizing total |correlation|.
inline SignedPermutation match_components(const Matrix& reference, const Matrix& estimate) {
  const std::size_t n = reference.cols();
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c(i, j) = correlation(reference, i, estimate, j);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SignedPermutation best;
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (std::size_t i = 0; i < n; ++i) score += std::abs(c(i, perm[i]));
    if (score > best_score) {
      best_score = score;
      best.perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.signs.resize(n);
  best.abs_corr.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    best.signs[i] = c(i, best.perm[i]) < 0 ? -1.0 : 1.0;
    best.abs_corr[i] = std::abs(c(i, best.perm[i]));
  }
  return best;
}

/// min over signed permutation matrices P of max|M - P|.
inline double signed_permutation_distance(const Matrix& m) {
  const std::size_t n = m.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = INFINITY;
  do {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double target = 0.0;
        if (perm[i] == j) target = m(i, j) < 0 ? -1.0 : 1.0;
        worst = std::max(worst, std::abs(m(i, j) - target));
      }
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Units

inline std::vector<std::uint32_t> dedup(const std::vector<std::uint32_t>& s) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i == 0 || s[i] != s[i - 1]) out.push_back(s[i]);
  return out;
}

inline std::vector<std::uint32_t> merge_naive(const std::vector<std::uint32_t>& s, std::uint32_t a,
                                              std::uint32_t b, std::uint32_t sym) {
  std::vector<std::uint32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (i + 1 < s.size() && s[i] == a && s[i + 1] == b) {
      out.push_back(sym);
      i += 2;
    } else {
      out.push_back(s[i++]);
    }
  }
  return out;
}

struct NaiveMerge {
  std::uint32_t left, right, symbol;
};

/// Recount every adjacent pair from scratch before each merge.
inline std::vector<NaiveMerge> bpe_brute_force(std::vector<std::vector<std::uint32_t>> corpus,
                                               std::uint32_t base, std::size_t vocab) {
  std::vector<NaiveMerge> merges;
  while (base + merges.size() < vocab) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, long> counts;
    for (const auto& s : corpus)
      for (std::size_t i = 0; i + 1 < s.size(); ++i) ++counts[{s[i], s[i + 1]}];
    long best = 1;
    std::pair<std::uint32_t, std::uint32_t> arg{};
    for (const auto& [p, c] : counts) {
      if (c > best) {
        best = c;
        arg = p;
      }
    }
    if (best < 2) break;
    const auto sym = static_cast<std::uint32_t>(base + merges.size());
    merges.push_back({arg.first, arg.second, sym});
    for (auto& s : corpus) s = merge_naive(s, arg.first, arg.second, sym);
  }
  return merges;
}

// ---------------------------------------------------------------------------
// Filesystem

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dsu_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
