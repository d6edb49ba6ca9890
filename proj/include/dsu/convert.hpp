#pragma once

// Import feature arrays from common dump formats into the DSUK matrix format.
// The input kind is detected from its leading bytes.
//
//   .npy  NumPy array, 1-D or 2-D, C order, dtype <f8 / <f4 (little-endian)
//   text  one frame per line, values separated by whitespace or commas
//         (blank lines and `#` comments skipped)

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dsu/binary_io.hpp"
#include "dsu/data.hpp"
#include "dsu/error.hpp"

namespace dsu {

namespace detail {

inline std::string npy_header_value(const std::string& header, const std::string& key,
                                    const std::string& source) {
  const auto k = header.find("'" + key + "'");
  if (k == std::string::npos) throw FormatError(source + ": npy header lacks '" + key + "'");
  auto colon = header.find(':', k);
  if (colon == std::string::npos) throw FormatError(source + ": malformed npy header");
  auto start = header.find_first_not_of(' ', colon + 1);
  if (header[start] == '(') return header.substr(start, header.find(')', start) - start + 1);
  auto end = header.find_first_of(",}", start);
  return trim(header.substr(start, end - start));
}

}  // namespace detail

inline FeatureMatrix decode_npy(std::span<const unsigned char> bytes, const std::string& source) {
  io::Reader r(bytes, source);
  if (r.get_bytes(6, "magic") != std::string("\x93NUMPY", 6)) {
    throw FormatError(source + ": not an npy file (bad magic at byte offset 0)");
  }
  const auto major = r.get<std::uint8_t>("version");
  r.get<std::uint8_t>("version");
  std::size_t header_len = 0;
  if (major == 1) {
    header_len = r.get<std::uint16_t>("header length");
  } else if (major == 2 || major == 3) {
    header_len = r.get<std::uint32_t>("header length");
  } else {
    throw FormatError(source + ": unsupported npy version " + std::to_string(major));
  }
  const std::string header = r.get_bytes(header_len, "npy header");

  const auto descr = detail::npy_header_value(header, "descr", source);
  const auto fortran = detail::npy_header_value(header, "fortran_order", source);
  const auto shape = detail::npy_header_value(header, "shape", source);
  if (fortran != "False") throw FormatError(source + ": Fortran-order arrays are not supported");
  std::size_t width = 0;
  if (descr == "'<f8'" || descr == "'=f8'") width = 8;
  else if (descr == "'<f4'" || descr == "'=f4'") width = 4;
  else throw FormatError(source + ": unsupported dtype " + descr + " (expected <f8 or <f4)");

  std::vector<std::size_t> dims;
  {
    std::string inner = shape.substr(1, shape.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) dims.push_back(detail::parse_count(item, source + " npy shape"));
    }
  }
  if (dims.empty() || dims.size() > 2) throw FormatError(source + ": expected a 1-D or 2-D array");
  const std::size_t rows = dims[0];
  const std::size_t cols = dims.size() == 2 ? dims[1] : 1;
  if (rows == 0 || cols == 0) throw FormatError(source + ": empty matrix");
  if (r.remaining() != rows * cols * width) {
    throw FormatError(source + ": npy payload at byte offset " + std::to_string(r.offset()) + " has " +
                      std::to_string(r.remaining()) + " bytes, expected " + std::to_string(rows * cols * width));
  }
  FeatureMatrix m(rows, cols);
  auto out = m.values();
  if (width == 8) {
    r.get_doubles(out, "payload");
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto bits = r.get<std::uint32_t>("payload");
      float f;
      std::memcpy(&f, &bits, sizeof f);
      out[i] = static_cast<double>(f);
    }
  }
  if (!m.all_finite()) throw FormatError(source + ": non-finite value in npy payload");
  return m;
}

inline FeatureMatrix parse_text_matrix(std::string_view text, const std::string& source) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  detail::for_each_record(text, [&](std::string_view line, std::size_t lineno) {
    std::string s(line);
    for (char& ch : s)
      if (ch == ',') ch = ' ';
    std::istringstream is(s);
    std::string tok;
    std::size_t n = 0;
    while (is >> tok) {
      values.push_back(detail::parse_real(tok, source + ":" + std::to_string(lineno)));
      ++n;
    }
    if (n == 0) return;
    if (cols == 0) cols = n;
    if (n != cols) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                        " values, found " + std::to_string(n));
    }
    ++rows;
  });
  if (rows == 0) throw FormatError(source + ": empty matrix");
  return FeatureMatrix(rows, cols, std::move(values));
}

/// One row per line, values space-separated at full precision.
inline std::string format_text_matrix(const FeatureMatrix& m) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
    os << '\n';
  }
  return os.str();
}

/// Import by content: NumPy .npy, the binary matrix format, or text.
inline FeatureMatrix import_matrix(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  auto starts_with = [&](std::string_view magic) {
    return bytes.size() >= magic.size() &&
           std::equal(magic.begin(), magic.end(), bytes.begin(),
                      [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; });
  };
  if (starts_with(std::string_view("\x93NUMPY", 6))) return decode_npy(bytes, path.string());
  if (starts_with(kMatrixMagic)) return decode_matrix(bytes, path.string());
  return parse_text_matrix(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                           path.string());
}

}  // namespace dsu
