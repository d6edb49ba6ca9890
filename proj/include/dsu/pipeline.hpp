#pragma once

// End-to-end pipeline stages driven by a PipelineConfig. Each stage writes its
// outputs under output_dir and a JSON run manifest recording the config,
// its hash, and fingerprints of every input and output file. Outputs contain
// no timestamps or host details, so identical inputs give identical bytes.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsu/analysis.hpp"
#include "dsu/binary_io.hpp"
#include "dsu/config.hpp"
#include "dsu/data.hpp"
#include "dsu/error.hpp"
#include "dsu/ica.hpp"
#include "dsu/kmeans.hpp"
#include "dsu/parallel.hpp"
#include "dsu/preprocess.hpp"
#include "dsu/transform_io.hpp"
#include "dsu/units.hpp"

namespace dsu {

inline constexpr const char* kToolVersion = "1.0.0";

namespace files {
inline constexpr const char* kTransform = "transform.dsut";
inline constexpr const char* kModel = "kmeans.dsum";
inline constexpr const char* kFitManifest = "fit_manifest.json";
inline constexpr const char* kUnits = "units.txt";
inline constexpr const char* kUnitsDedup = "units_dedup.txt";
inline constexpr const char* kUnitsBpe = "units_bpe.txt";
inline constexpr const char* kBpe = "bpe.txt";
inline constexpr const char* kBitrate = "bitrate.json";
inline constexpr const char* kEncodeManifest = "encode_manifest.json";
inline constexpr const char* kSimilarity = "similarity.csv";
inline constexpr const char* kNeighbors = "neighbors.csv";
inline constexpr const char* kExtremes = "extremes.csv";
inline constexpr const char* kAnalysis = "analysis.json";
inline constexpr const char* kAnalyzeManifest = "analyze_manifest.json";
}  // namespace files

namespace detail {

/// Run fn, prefixing any library error with the stage name while keeping its type.
template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  const std::string p = "[" + stage + "] ";
  try {
    return fn();
  } catch (const NumericalError& e) {
    throw NumericalError(p + e.what());
  } catch (const FormatError& e) {
    throw FormatError(p + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(p + e.what());
  } catch (const IoError& e) {
    throw IoError(p + e.what());
  } catch (const DataError& e) {
    throw DataError(p + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(p + e.what());
  } catch (const ParameterError& e) {
    throw ParameterError(p + e.what());
  }
}

inline std::string file_digest(const std::filesystem::path& p) {
  const auto bytes = io::read_file(p);
  return io::hex64(io::fnv1a64(bytes));
}

inline void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string(what) + " path is not set");
  if (!std::filesystem::is_regular_file(p)) {
    throw ConfigError(std::string(what) + " not found: " + p.string());
  }
}

inline void prepare_output_dir(const std::filesystem::path& dir) {
  if (dir.empty()) throw ConfigError("output_dir is not set");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("cannot create output_dir " + dir.string());
  }
}

inline nlohmann::json run_manifest(const std::string& command, const PipelineConfig& c) {
  nlohmann::json j;
  j["tool"] = "dsu";
  j["version"] = kToolVersion;
  j["command"] = command;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(c)) cfg[k] = v;
  j["config"] = cfg;
  const auto canonical = format_config(c);
  j["config_hash"] = io::hex64(io::fnv1a64(
      {reinterpret_cast<const unsigned char*>(canonical.data()), canonical.size()}));
  j["seed"] = c.seed;
  j["inputs"] = nlohmann::json::array();
  j["outputs"] = nlohmann::json::array();
  return j;
}

inline void add_file(nlohmann::json& list, const std::string& role, const std::filesystem::path& p) {
  list.push_back({{"role", role}, {"path", p.string()}, {"fnv1a64", file_digest(p)}});
}

inline void add_manifest_inputs(nlohmann::json& j, const std::filesystem::path& manifest_path,
                                const UtteranceManifest& manifest) {
  add_file(j["inputs"], "manifest", manifest_path);
  for (const auto& e : manifest) {
    if (e.frames == 0) continue;
    add_file(j["inputs"], "features:" + e.id, e.path);
  }
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  io::write_text(p, j.dump(2) + "\n");
}

inline std::optional<Transform> fit_transform(Preprocessing p, const FeatureMatrix& x, const PipelineConfig& c) {
  switch (p) {
    case Preprocessing::None: return std::nullopt;
    case Preprocessing::Std: return Transform{fit_standardize(x)};
    case Preprocessing::Pca: return Transform{fit_pca(x)};
    case Preprocessing::Whiten: return Transform{fit_whiten(x)};
    case Preprocessing::Ica: return Transform{fit_ica(x, c.ica_iters, c.seed)};
  }
  return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// fit

struct FitResult {
  std::optional<Transform> transform;
  KMeansModel model;
  std::size_t total_frames = 0;
  std::size_t sampled_frames = 0;
  int kmeans_iterations = 0;
  double final_inertia = 0.0;
};

inline FitResult cmd_fit(const PipelineConfig& c) {
  detail::in_stage("config", [&] {
    validate_numeric(c);
    detail::require_file(c.manifest, "manifest");
    detail::prepare_output_dir(c.output_dir);
  });

  const auto manifest = detail::in_stage("data", [&] { return read_manifest(c.manifest); });
  const auto all = detail::in_stage("data", [&] { return load_concatenated(manifest); });
  const auto sample = detail::in_stage("sample", [&] { return sample_frames(all, c.sample_fraction, c.seed); });

  FitResult result;
  result.total_frames = all.rows();
  result.sampled_frames = sample.rows();
  result.transform = detail::in_stage("preprocess", [&] {
    return detail::fit_transform(c.preprocessing, c.preprocess_on_full ? all : sample, c);
  });
  const FeatureMatrix features =
      result.transform ? detail::in_stage("preprocess", [&] { return apply_transform(*result.transform, sample); }) : sample;

  KMeansOptions km;
  km.k = c.k;
  km.metric = c.metric;
  km.seed = c.seed;
  km.max_iters = c.kmeans_max_iters;
  km.tol = c.kmeans_tol;
  km.threads = c.threads;
  auto fit = detail::in_stage("kmeans", [&] { return fit_kmeans_detailed(features, km); });
  result.model = std::move(fit.model);
  result.kmeans_iterations = fit.iterations;
  result.final_inertia = fit.inertia.back();

  detail::in_stage("write", [&] {
    const auto dir = c.output_dir;
    auto j = detail::run_manifest("fit", c);
    detail::add_manifest_inputs(j, c.manifest, manifest);
    std::error_code ec;
    std::filesystem::remove(dir / files::kTransform, ec);
    if (result.transform) {
      save_transform(*result.transform, dir / files::kTransform);
      detail::add_file(j["outputs"], "transform", dir / files::kTransform);
    }
    save_model(result.model, dir / files::kModel);
    detail::add_file(j["outputs"], "kmeans", dir / files::kModel);
    j["stats"] = {{"total_frames", result.total_frames},
                  {"sampled_frames", result.sampled_frames},
                  {"kmeans_iterations", result.kmeans_iterations},
                  {"kmeans_converged", fit.converged},
                  {"final_inertia", result.final_inertia}};
    detail::write_json(dir / files::kFitManifest, j);
  });
  return result;
}

// ---------------------------------------------------------------------------
// encode

struct EncodeResult {
  std::vector<UnitSequence> units;
  std::vector<UnitSequence> deduplicated;
  std::vector<UnitSequence> encoded;
  BpeModel bpe;
  std::vector<double> bitrates;
  double mean_bitrate = 0.0;
};

inline std::optional<Transform> load_artifact_transform(const PipelineConfig& c) {
  if (c.preprocessing == Preprocessing::None) return std::nullopt;
  const auto path = c.artifact_dir() / files::kTransform;
  detail::require_file(path, "transform");
  auto t = load_transform(path);
  if (kind(t) != static_cast<TransformKind>(static_cast<int>(c.preprocessing))) {
    throw ConfigError("transform file " + path.string() + " holds " + kind_name(kind(t)) +
                      ", config says " + preprocessing_name(c.preprocessing));
  }
  return t;
}

inline EncodeResult cmd_encode(const PipelineConfig& c) {
  detail::in_stage("config", [&] {
    validate_numeric(c);
    detail::require_file(c.manifest, "manifest");
    detail::require_file(c.artifact_dir() / files::kModel, "k-means model");
    if (!c.bpe_model.empty()) detail::require_file(c.bpe_model, "bpe model");
    detail::prepare_output_dir(c.output_dir);
  });

  const auto manifest = detail::in_stage("data", [&] { return read_manifest(c.manifest); });
  const auto transform = detail::in_stage("artifacts", [&] { return load_artifact_transform(c); });
  const auto model = detail::in_stage("artifacts", [&] { return load_model(c.artifact_dir() / files::kModel); });
  if (transform && dim(*transform) != model.dim()) {
    throw DimensionError("[artifacts] transform D=" + std::to_string(dim(*transform)) + " but model D=" +
                         std::to_string(model.dim()));
  }

  EncodeResult r;
  r.units.resize(manifest.size());
  detail::in_stage("assign", [&] {
    parallel_for(manifest.size(), c.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto& e = manifest[i];
        r.units[i] = UnitSequence{e.id, {}, e.duration_s};
        if (e.frames == 0) continue;
        FeatureMatrix x = load_utterance(e);
        if (x.cols() != model.dim()) {
          throw DimensionError(e.id + ": features have D=" + std::to_string(x.cols()) + ", model D=" +
                               std::to_string(model.dim()));
        }
        if (transform) x = apply_transform(*transform, x);
        r.units[i].units = assign(model, x);
      }
    });
  });

  for (const auto& s : r.units) r.deduplicated.push_back(deduplicate(s));

  detail::in_stage("bpe", [&] {
    if (!c.bpe_model.empty()) {
      r.bpe = load_bpe(c.bpe_model);
      if (r.bpe.base_vocab != model.k()) {
        throw ConfigError("bpe model base vocabulary " + std::to_string(r.bpe.base_vocab) +
                          " differs from k=" + std::to_string(model.k()));
      }
    } else {
      r.bpe = fit_bpe(r.deduplicated, model.k(), c.bpe_vocab);
    }
    for (const auto& s : r.deduplicated) r.encoded.push_back(apply_bpe(r.bpe, s));
  });

  detail::in_stage("bitrate", [&] {
    r.bitrates = bitrates(r.encoded, r.bpe.vocab_size);
    double sum = 0.0;
    for (double b : r.bitrates) sum += b;
    r.mean_bitrate = sum / static_cast<double>(r.bitrates.size());
  });

  detail::in_stage("write", [&] {
    const auto dir = c.output_dir;
    auto j = detail::run_manifest("encode", c);
    detail::add_manifest_inputs(j, c.manifest, manifest);
    if (transform) detail::add_file(j["inputs"], "transform", c.artifact_dir() / files::kTransform);
    detail::add_file(j["inputs"], "kmeans", c.artifact_dir() / files::kModel);
    if (!c.bpe_model.empty()) {
      detail::add_file(j["inputs"], "bpe", c.bpe_model);
    } else {
      save_bpe(r.bpe, dir / files::kBpe);
      detail::add_file(j["outputs"], "bpe", dir / files::kBpe);
    }
    write_units(r.units, dir / files::kUnits);
    write_units(r.deduplicated, dir / files::kUnitsDedup);
    write_units(r.encoded, dir / files::kUnitsBpe);

    nlohmann::json br;
    br["vocab_size"] = r.bpe.vocab_size;
    br["mean"] = r.mean_bitrate;
    br["per_utterance"] = nlohmann::json::array();
    for (std::size_t i = 0; i < r.encoded.size(); ++i) {
      br["per_utterance"].push_back({{"id", r.encoded[i].id},
                                     {"length", r.encoded[i].units.size()},
                                     {"duration_s", r.encoded[i].duration_s},
                                     {"bitrate", r.bitrates[i]}});
    }
    detail::write_json(dir / files::kBitrate, br);
    for (const char* f : {files::kUnits, files::kUnitsDedup, files::kUnitsBpe, files::kBitrate}) {
      detail::add_file(j["outputs"], f, dir / f);
    }
    detail::write_json(dir / files::kEncodeManifest, j);
  });
  return r;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeResult {
  SimilarityHistogram histogram;
  std::optional<NeighborReport> neighbors;
  std::optional<std::vector<ComponentExtremes>> extremes;
  std::vector<std::string> notices;
};

inline AnalyzeResult cmd_analyze(const PipelineConfig& c) {
  auto wants = [&](const char* a) { return std::find(c.analyses.begin(), c.analyses.end(), a) != c.analyses.end(); };
  const bool labeled = wants("neighbors") || wants("extremes");
  detail::in_stage("config", [&] {
    validate_numeric(c);
    detail::require_file(c.artifact_dir() / files::kModel, "k-means model");
    if (labeled) {
      if (c.labels.empty()) throw ConfigError("labels are required for neighbor and extreme analyses");
      detail::require_file(c.labels, "labels");
      detail::require_file(c.manifest, "manifest");
    }
    detail::prepare_output_dir(c.output_dir);
  });

  const auto model = detail::in_stage("artifacts", [&] { return load_model(c.artifact_dir() / files::kModel); });
  const auto transform = detail::in_stage("artifacts", [&] { return load_artifact_transform(c); });

  AnalyzeResult r;
  nlohmann::json summary;
  auto j = detail::run_manifest("analyze", c);
  detail::add_file(j["inputs"], "kmeans", c.artifact_dir() / files::kModel);
  if (transform) detail::add_file(j["inputs"], "transform", c.artifact_dir() / files::kTransform);

  r.histogram = detail::in_stage("similarity", [&] { return centroid_similarity(model, c.bins); });
  summary["similarity"] = {{"mean", r.histogram.mean_similarity},
                           {"bin_edges", r.histogram.bin_edges},
                           {"counts", r.histogram.counts}};

  std::vector<PooledSegment> pool;
  if (labeled) {
    pool = detail::in_stage("labels", [&] {
      const auto manifest = read_manifest(c.manifest);
      const auto segments = read_labels(c.labels);
      validate_segments(segments, manifest);
      std::set<std::string> needed;
      for (const auto& s : segments) needed.insert(s.utterance_id);
      std::map<std::string, FeatureMatrix> features;
      for (const auto& e : manifest) {
        if (needed.contains(e.id)) features.emplace(e.id, load_utterance(e));
      }
      detail::add_manifest_inputs(j, c.manifest, manifest);
      detail::add_file(j["inputs"], "labels", c.labels);
      return pooled_segments(features, segments);
    });
  }

  if (wants("neighbors")) {
    r.neighbors = detail::in_stage("neighbors", [&] {
      std::vector<PooledSegment> mapped = pool;
      if (transform) {
        const Matrix m = apply_transform(*transform, pool_matrix(pool));
        for (std::size_t i = 0; i < mapped.size(); ++i) {
          mapped[i].vector.assign(m.row(i).begin(), m.row(i).end());
        }
      }
      return nearest_to_centroids(model, mapped, c.neighbors);
    });
    nlohmann::json pure = nlohmann::json::array();
    for (const auto& e : r.neighbors->centroids) {
      if (e.pure) pure.push_back({{"centroid", e.centroid}, {"label", e.labels.front().label}});
    }
    summary["neighbors"] = {{"m", c.neighbors}, {"pure_count", pure.size()}, {"pure", pure}};
  }

  if (wants("extremes")) {
    const auto* ica = transform ? std::get_if<IcaTransform>(&*transform) : nullptr;
    if (!ica) {
      r.notices.push_back("component extremes skipped: no ICA transform");
      summary["extremes"] = {{"skipped", true}};
    } else {
      r.extremes = detail::in_stage("extremes", [&] { return component_extremes(*ica, pool, c.top); });
      nlohmann::json comps = nlohmann::json::array();
      for (const auto& e : *r.extremes) {
        if (!e.top_pure && !e.bottom_pure) continue;
        comps.push_back({{"component", e.component},
                         {"top_pure", e.top_pure},
                         {"bottom_pure", e.bottom_pure},
                         {"top_label", e.top_labels.front().label},
                         {"bottom_label", e.bottom_labels.front().label}});
      }
      summary["extremes"] = {{"skipped", false}, {"m", c.top}, {"pure_components", comps}};
    }
  }

  detail::in_stage("write", [&] {
    const auto dir = c.output_dir;
    io::write_text(dir / files::kSimilarity, histogram_csv(r.histogram));
    detail::add_file(j["outputs"], "similarity", dir / files::kSimilarity);
    std::error_code ec;
    std::filesystem::remove(dir / files::kNeighbors, ec);
    std::filesystem::remove(dir / files::kExtremes, ec);
    if (r.neighbors) {
      io::write_text(dir / files::kNeighbors, neighbors_csv(*r.neighbors));
      detail::add_file(j["outputs"], "neighbors", dir / files::kNeighbors);
    }
    if (r.extremes) {
      io::write_text(dir / files::kExtremes, extremes_csv(*r.extremes));
      detail::add_file(j["outputs"], "extremes", dir / files::kExtremes);
    }
    summary["notices"] = r.notices;
    detail::write_json(dir / files::kAnalysis, summary);
    detail::add_file(j["outputs"], "analysis", dir / files::kAnalysis);
    detail::write_json(dir / files::kAnalyzeManifest, j);
  });
  return r;
}

// ---------------------------------------------------------------------------
// bpe-train / bitrate

/// Train BPE on a unit file (deduplicated first) and save the model.
inline BpeModel cmd_bpe_train(const std::filesystem::path& units_path, std::size_t base_vocab,
                              std::size_t vocab_size, const std::filesystem::path& out_path) {
  detail::in_stage("config", [&] { detail::require_file(units_path, "unit file"); });
  auto corpus = detail::in_stage("data", [&] { return read_units(units_path); });
  for (auto& s : corpus) s = deduplicate(s);
  auto model = detail::in_stage("bpe", [&] { return fit_bpe(corpus, base_vocab, vocab_size); });
  detail::in_stage("write", [&] { save_bpe(model, out_path); });
  return model;
}

/// Bit-rate report for an already-encoded unit file.
inline nlohmann::json cmd_bitrate(const std::filesystem::path& units_path,
                                  const std::filesystem::path& manifest_path, std::size_t vocab_size) {
  detail::in_stage("config", [&] {
    detail::require_file(units_path, "unit file");
    detail::require_file(manifest_path, "manifest");
  });
  auto seqs = detail::in_stage("data", [&] {
    auto s = read_units(units_path);
    attach_durations(s, read_manifest(manifest_path));
    return s;
  });
  const auto per = detail::in_stage("bitrate", [&] { return bitrates(seqs, vocab_size); });
  nlohmann::json out;
  out["vocab_size"] = vocab_size;
  double sum = 0.0;
  out["per_utterance"] = nlohmann::json::array();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    sum += per[i];
    out["per_utterance"].push_back({{"id", seqs[i].id},
                                    {"length", seqs[i].units.size()},
                                    {"duration_s", seqs[i].duration_s},
                                    {"bitrate", per[i]}});
  }
  out["mean"] = sum / static_cast<double>(per.size());
  return out;
}

}  // namespace dsu
