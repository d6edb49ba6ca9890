#pragma once

// Feature matrix files, utterance manifests, frame-aligned label files and
// frame sampling.
//
// Matrix file layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "DSUK"
//   4       2     format version (1)
//   6       2     dtype code (1 = float64)
//   8       8     rows (T)
//   16      8     cols (D)
//   24      8*T*D row-major float64 payload

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dsu/binary_io.hpp"
#include "dsu/error.hpp"
#include "dsu/matrix.hpp"
#include "dsu/rng.hpp"

namespace dsu {

inline constexpr std::string_view kMatrixMagic = "DSUK";
inline constexpr std::uint16_t kMatrixVersion = 1;
inline constexpr std::uint16_t kDtypeFloat64 = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 24;

inline std::vector<unsigned char> encode_matrix(const FeatureMatrix& m) {
  io::Writer w;
  w.put_bytes(kMatrixMagic);
  w.put<std::uint16_t>(kMatrixVersion);
  w.put<std::uint16_t>(kDtypeFloat64);
  w.put<std::uint64_t>(m.rows());
  w.put<std::uint64_t>(m.cols());
  w.put_doubles(m.values());
  return w.bytes();
}

inline FeatureMatrix decode_matrix(std::span<const unsigned char> bytes, const std::string& source) {
  io::Reader r(bytes, source);
  if (r.get_bytes(4, "magic") != kMatrixMagic) {
    throw FormatError(source + ": bad magic at byte offset 0 (expected \"DSUK\")");
  }
  if (const auto v = r.get<std::uint16_t>("version"); v != kMatrixVersion) {
    throw FormatError(source + ": unsupported format version " + std::to_string(v) +
                      " at byte offset 4");
  }
  if (const auto dt = r.get<std::uint16_t>("dtype"); dt != kDtypeFloat64) {
    throw FormatError(source + ": unsupported dtype code " + std::to_string(dt) +
                      " at byte offset 6");
  }
  const auto rows = r.get<std::uint64_t>("row count");
  const auto cols = r.get<std::uint64_t>("column count");
  if (rows == 0 || cols == 0) {
    throw FormatError(source + ": empty matrix (" + std::to_string(rows) + "x" +
                      std::to_string(cols) + ") in header at byte offset 8");
  }
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max() / sizeof(double);
  if (rows > kMax / cols) {
    throw FormatError(source + ": dimension overflow in header at byte offset 8");
  }
  const std::uint64_t expected = rows * cols * sizeof(double);
  if (r.remaining() != expected) {
    throw FormatError(source + ": payload at byte offset 24 has " + std::to_string(r.remaining()) +
                      " bytes, expected " + std::to_string(expected));
  }
  FeatureMatrix m(rows, cols);
  r.get_doubles(m.values(), "payload");
  const auto vals = m.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!std::isfinite(vals[i])) {
      throw FormatError(source + ": non-finite value at byte offset " +
                        std::to_string(kMatrixHeaderBytes + i * sizeof(double)));
    }
  }
  return m;
}

inline FeatureMatrix read_matrix(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_matrix(bytes, path.string());
}

inline void write_matrix(const FeatureMatrix& m, const std::filesystem::path& path) {
  if (m.rows() == 0 || m.cols() == 0) throw ParameterError("write_matrix: empty matrix");
  if (!m.all_finite()) throw ParameterError("write_matrix: matrix has non-finite values");
  io::write_file(path, encode_matrix(m));
}

/// Rows drawn uniformly without replacement, kept in their original order.
/// The row count is round-half-up(fraction * T), at least 1.
inline FeatureMatrix sample_frames(const FeatureMatrix& m, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw ParameterError("sample fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  const std::size_t total = m.rows();
  auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total) + 0.5));
  count = std::clamp<std::size_t>(count, 1, total);
  if (count == total) return m;

  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());

  FeatureMatrix out(count, m.cols());
  for (std::size_t i = 0; i < count; ++i) {
    std::copy(m.row(idx[i]).begin(), m.row(idx[i]).end(), out.row(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests and labels

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;  // resolved against the manifest's directory
  std::size_t frames = 0;
  double duration_s = 0.0;
};

using UtteranceManifest = std::vector<ManifestEntry>;

struct LabeledSegment {
  std::string utterance_id;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;  // exclusive
  std::string label;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::size_t parse_count(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    throw FormatError(where + ": expected non-negative integer, got \"" + s + "\"");
  }
  if (used != s.size()) throw FormatError(where + ": expected non-negative integer, got \"" + s + "\"");
  return static_cast<std::size_t>(v);
}

inline double parse_real(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError(where + ": expected number, got \"" + s + "\"");
  }
  if (used != s.size() || !std::isfinite(v)) {
    throw FormatError(where + ": expected number, got \"" + s + "\"");
  }
  return v;
}

template <typename Fn>
void for_each_record(std::string_view text, Fn&& fn) {
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    fn(line, lineno);
  }
}

}  // namespace detail

/// Parse manifest TSV text: `id<TAB>path<TAB>frames<TAB>duration_s`.
/// Relative paths resolve against base_dir. Blank lines and `#` comments are skipped.
inline UtteranceManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                                        const std::string& source = "manifest") {
  UtteranceManifest out;
  std::set<std::string> seen;
  detail::for_each_record(text, [&](std::string_view line, std::size_t lineno) {
    const std::string where = source + ":" + std::to_string(lineno);
    auto f = detail::split_tabs(line);
    if (f.size() != 4) throw FormatError(where + ": expected 4 tab-separated fields");
    ManifestEntry e;
    e.id = f[0];
    if (e.id.empty()) throw FormatError(where + ": empty utterance id");
    if (!seen.insert(e.id).second) throw FormatError(where + ": duplicate utterance id " + e.id);
    e.path = std::filesystem::path(f[1]);
    if (e.path.is_relative()) e.path = base_dir / e.path;
    e.frames = detail::parse_count(f[2], where);
    e.duration_s = detail::parse_real(f[3], where);
    if (!(e.duration_s > 0.0)) throw FormatError(where + ": duration must be positive");
    out.push_back(std::move(e));
  });
  return out;
}

inline UtteranceManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_text(path), path.parent_path(), path.string());
}

inline std::string format_manifest(const UtteranceManifest& manifest) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& e : manifest) {
    os << e.id << '\t' << e.path.string() << '\t' << e.frames << '\t' << e.duration_s << '\n';
  }
  return os.str();
}

/// Load one utterance's features and check the row count against the manifest.
inline FeatureMatrix load_utterance(const ManifestEntry& e) {
  auto m = read_matrix(e.path);
  if (m.rows() != e.frames) {
    throw DataError(e.path.string() + ": manifest says " + std::to_string(e.frames) +
                    " frames for " + e.id + ", file has " + std::to_string(m.rows()));
  }
  return m;
}

/// Concatenate every non-empty utterance in manifest order.
inline FeatureMatrix load_concatenated(const UtteranceManifest& manifest) {
  std::vector<FeatureMatrix> parts;
  for (const auto& e : manifest) {
    if (e.frames == 0) continue;
    parts.push_back(load_utterance(e));
  }
  if (parts.empty()) throw DataError("manifest has no frames");
  return vstack(parts);
}

/// Parse label TSV text: `utterance_id<TAB>start<TAB>end<TAB>label`, end exclusive.
inline std::vector<LabeledSegment> parse_labels(std::string_view text,
                                                const std::string& source = "labels") {
  std::vector<LabeledSegment> out;
  detail::for_each_record(text, [&](std::string_view line, std::size_t lineno) {
    const std::string where = source + ":" + std::to_string(lineno);
    auto f = detail::split_tabs(line);
    if (f.size() != 4) throw FormatError(where + ": expected 4 tab-separated fields");
    LabeledSegment s{f[0], detail::parse_count(f[1], where), detail::parse_count(f[2], where), f[3]};
    if (s.start_frame >= s.end_frame) {
      throw FormatError(where + ": start frame must be below end frame");
    }
    if (s.label.empty()) throw FormatError(where + ": empty label");
    out.push_back(std::move(s));
  });
  return out;
}

inline std::vector<LabeledSegment> read_labels(const std::filesystem::path& path) {
  return parse_labels(io::read_text(path), path.string());
}

/// Check every segment lies within its utterance.
inline void validate_segments(std::span<const LabeledSegment> segments,
                              const UtteranceManifest& manifest) {
  std::map<std::string, std::size_t> frames;
  for (const auto& e : manifest) frames[e.id] = e.frames;
  for (const auto& s : segments) {
    auto it = frames.find(s.utterance_id);
    if (it == frames.end()) throw DataError("label refers to unknown utterance " + s.utterance_id);
    if (s.end_frame > it->second) {
      throw DataError("segment " + s.utterance_id + "[" + std::to_string(s.start_frame) + "," +
                      std::to_string(s.end_frame) + ") exceeds " + std::to_string(it->second) +
                      " frames");
    }
  }
}

}  // namespace dsu
