#pragma once

// Flat key=value pipeline configuration. Blank lines and `#` comments are
// ignored; whitespace around keys and values is trimmed. Precedence is
// command-line flags > config file > built-in defaults.

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dsu/binary_io.hpp"
#include "dsu/data.hpp"
#include "dsu/error.hpp"
#include "dsu/kmeans.hpp"

namespace dsu {

enum class Preprocessing { None, Std, Pca, Whiten, Ica };

inline Preprocessing parse_preprocessing(std::string_view s) {
  if (s == "none") return Preprocessing::None;
  if (s == "std") return Preprocessing::Std;
  if (s == "pca") return Preprocessing::Pca;
  if (s == "whiten") return Preprocessing::Whiten;
  if (s == "ica") return Preprocessing::Ica;
  throw ConfigError("unknown preprocessing \"" + std::string(s) + "\" (expected none, std, pca, whiten or ica)");
}

inline const char* preprocessing_name(Preprocessing p) {
  switch (p) {
    case Preprocessing::None: return "none";
    case Preprocessing::Std: return "std";
    case Preprocessing::Pca: return "pca";
    case Preprocessing::Whiten: return "whiten";
    case Preprocessing::Ica: return "ica";
  }
  return "none";
}

struct PipelineConfig {
  Preprocessing preprocessing = Preprocessing::None;
  Metric metric = Metric::Euclidean;
  std::size_t k = 2000;
  double sample_fraction = 0.05;
  int ica_iters = 100;
  std::uint64_t seed = 0;
  std::size_t bpe_vocab = 3000;
  int kmeans_max_iters = 300;
  double kmeans_tol = 1e-6;
  bool preprocess_on_full = false;  // fit preprocessing on all frames instead of the k-means sample
  unsigned threads = 1;

  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  std::filesystem::path model_dir;  // fitted artifacts; defaults to output_dir
  std::filesystem::path bpe_model;  // encode: trained on the encoded corpus when empty
  std::filesystem::path labels;

  std::size_t bins = 50;
  std::size_t neighbors = 10;
  std::size_t top = 5;
  std::vector<std::string> analyses = {"similarity", "neighbors", "extremes"};

  std::filesystem::path artifact_dir() const { return model_dir.empty() ? output_dir : model_dir; }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    T v{};
    if constexpr (std::is_floating_point_v<T>) {
      v = static_cast<T>(std::stod(value, &used));
    } else if constexpr (std::is_signed_v<T>) {
      v = static_cast<T>(std::stoll(value, &used));
    } else {
      if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
      v = static_cast<T>(std::stoull(value, &used));
    }
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": invalid number \"" + value + "\"");
  }
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto pos = s.find(',', start);
    if (pos == std::string::npos) pos = s.size();
    auto item = trim(std::string_view(s).substr(start, pos - start));
    if (!item.empty()) out.push_back(item);
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "preprocessing", "metric",      "k",         "sample_fraction", "ica_iters", "seed",
      "bpe_vocab",     "kmeans_max_iters", "kmeans_tol", "preprocess_fit", "threads", "manifest",
      "output_dir",    "model_dir",   "bpe_model", "labels",          "bins",      "neighbors",
      "top",           "analyses"};
  return keys;
}

/// Set one key. Relative paths are resolved against base_dir.
inline void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value,
                             const std::filesystem::path& base_dir = {}) {
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    if (!v.empty() && p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p;
  };
  try {
    if (key == "preprocessing") c.preprocessing = parse_preprocessing(value);
    else if (key == "metric") c.metric = parse_metric(value);
    else if (key == "k") c.k = detail::parse_number<std::size_t>(key, value);
    else if (key == "sample_fraction") c.sample_fraction = detail::parse_number<double>(key, value);
    else if (key == "ica_iters") c.ica_iters = detail::parse_number<int>(key, value);
    else if (key == "seed") c.seed = detail::parse_number<std::uint64_t>(key, value);
    else if (key == "bpe_vocab") c.bpe_vocab = detail::parse_number<std::size_t>(key, value);
    else if (key == "kmeans_max_iters") c.kmeans_max_iters = detail::parse_number<int>(key, value);
    else if (key == "kmeans_tol") c.kmeans_tol = detail::parse_number<double>(key, value);
    else if (key == "preprocess_fit") {
      if (value != "sample" && value != "full") throw ConfigError("preprocess_fit must be sample or full");
      c.preprocess_on_full = value == "full";
    } else if (key == "threads") c.threads = detail::parse_number<unsigned>(key, value);
    else if (key == "manifest") c.manifest = path(value);
    else if (key == "output_dir") c.output_dir = path(value);
    else if (key == "model_dir") c.model_dir = path(value);
    else if (key == "bpe_model") c.bpe_model = path(value);
    else if (key == "labels") c.labels = path(value);
    else if (key == "bins") c.bins = detail::parse_number<std::size_t>(key, value);
    else if (key == "neighbors") c.neighbors = detail::parse_number<std::size_t>(key, value);
    else if (key == "top") c.top = detail::parse_number<std::size_t>(key, value);
    else if (key == "analyses") c.analyses = detail::split_list(value);
    else throw ConfigError("unknown config key \"" + key + "\"");
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config key ") + key + ": " + e.what());
  }
}

inline void parse_config_text(PipelineConfig& c, std::string_view text,
                              const std::filesystem::path& base_dir = {},
                              const std::string& source = "config") {
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = detail::trim(text.substr(start, end - start));
    start = end + 1;
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
    }
    set_config_value(c, detail::trim(std::string_view(line).substr(0, eq)),
                     detail::trim(std::string_view(line).substr(eq + 1)), base_dir);
  }
}

inline PipelineConfig read_config(const std::filesystem::path& path) {
  PipelineConfig c;
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  parse_config_text(c, text, path.parent_path(), path.string());
  return c;
}

/// Canonical key=value rendering (sorted keys); also the input to the config hash.
inline std::map<std::string, std::string> config_entries(const PipelineConfig& c) {
  auto real = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  std::string analyses;
  for (std::size_t i = 0; i < c.analyses.size(); ++i) analyses += (i ? "," : "") + c.analyses[i];
  return {{"preprocessing", preprocessing_name(c.preprocessing)},
          {"metric", metric_name(c.metric)},
          {"k", std::to_string(c.k)},
          {"sample_fraction", real(c.sample_fraction)},
          {"ica_iters", std::to_string(c.ica_iters)},
          {"seed", std::to_string(c.seed)},
          {"bpe_vocab", std::to_string(c.bpe_vocab)},
          {"kmeans_max_iters", std::to_string(c.kmeans_max_iters)},
          {"kmeans_tol", real(c.kmeans_tol)},
          {"preprocess_fit", c.preprocess_on_full ? "full" : "sample"},
          {"threads", std::to_string(c.threads)},
          {"manifest", c.manifest.string()},
          {"output_dir", c.output_dir.string()},
          {"model_dir", c.model_dir.string()},
          {"bpe_model", c.bpe_model.string()},
          {"labels", c.labels.string()},
          {"bins", std::to_string(c.bins)},
          {"neighbors", std::to_string(c.neighbors)},
          {"top", std::to_string(c.top)},
          {"analyses", analyses}};
}

inline std::string format_config(const PipelineConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

/// Range checks shared by all subcommands.
inline void validate_numeric(const PipelineConfig& c) {
  if (c.k < 1) throw ConfigError("k must be at least 1");
  if (!(c.sample_fraction > 0.0) || c.sample_fraction > 1.0) throw ConfigError("sample_fraction must be in (0, 1]");
  if (c.ica_iters < 1) throw ConfigError("ica_iters must be at least 1");
  if (c.kmeans_max_iters < 0) throw ConfigError("kmeans_max_iters must be non-negative");
  if (!(c.kmeans_tol >= 0.0)) throw ConfigError("kmeans_tol must be non-negative");
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  if (c.bins < 1) throw ConfigError("bins must be at least 1");
  if (c.neighbors < 1 || c.top < 1) throw ConfigError("neighbors and top must be at least 1");
  for (const auto& a : c.analyses) {
    if (a != "similarity" && a != "neighbors" && a != "extremes") {
      throw ConfigError("unknown analysis \"" + a + "\"");
    }
  }
}

}  // namespace dsu
