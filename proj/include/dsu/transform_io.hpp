#pragma once

// Transform file layout (integers little-endian):
//
//   offset  size  field
//   0       4     magic "DSUT"
//   4       2     format version (1)
//   6       2     kind: 1 std, 2 pca, 3 whiten, 4 ica
//   8       8     D
//   16      8     array count
//   24            arrays, each: u16 name length, name bytes (ASCII),
//                 u64 element count, element count * float64
//
// Arrays appear in a fixed order per kind:
//   std:    mean[D] std[D]
//   pca:    mean[D] basis[D*D] eigenvalues[D]
//   whiten: mean[D] basis[D*D] eigenvalues[D] scale[D]
//   ica:    mean[D] basis[D*D] eigenvalues[D] scale[D] demixing[D*D]
// Matrices are row-major.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dsu/binary_io.hpp"
#include "dsu/error.hpp"
#include "dsu/preprocess.hpp"

namespace dsu {

inline constexpr std::string_view kTransformMagic = "DSUT";
inline constexpr std::uint16_t kTransformVersion = 1;

namespace detail {

struct NamedArray {
  std::string name;
  std::vector<double> values;
};

inline std::vector<NamedArray> transform_arrays(const Transform& t) {
  std::vector<NamedArray> out;
  auto add_vec = [&](const char* name, const std::vector<double>& v) { out.push_back({name, v}); };
  auto add_mat = [&](const char* name, const Matrix& m) {
    out.push_back({name, std::vector<double>(m.values().begin(), m.values().end())});
  };
  auto add_pca = [&](const PcaTransform& p) {
    add_vec("mean", p.mean);
    add_mat("basis", p.basis);
    add_vec("eigenvalues", p.eigenvalues);
  };
  std::visit(
      [&](const auto& tr) {
        using T = std::decay_t<decltype(tr)>;
        if constexpr (std::is_same_v<T, StandardizeTransform>) {
          add_vec("mean", tr.mean);
          add_vec("std", tr.std);
        } else if constexpr (std::is_same_v<T, PcaTransform>) {
          add_pca(tr);
        } else if constexpr (std::is_same_v<T, WhitenTransform>) {
          add_pca(tr.pca);
          add_vec("scale", tr.scale);
        } else {
          add_pca(tr.whiten.pca);
          add_vec("scale", tr.whiten.scale);
          add_mat("demixing", tr.demixing);
        }
      },
      t);
  return out;
}

}  // namespace detail

inline std::vector<unsigned char> encode_transform(const Transform& t) {
  const auto arrays = detail::transform_arrays(t);
  io::Writer w;
  w.put_bytes(kTransformMagic);
  w.put<std::uint16_t>(kTransformVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(kind(t)));
  w.put<std::uint64_t>(dim(t));
  w.put<std::uint64_t>(arrays.size());
  for (const auto& a : arrays) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(a.name.size()));
    w.put_bytes(a.name);
    w.put<std::uint64_t>(a.values.size());
    w.put_doubles(a.values);
  }
  return w.bytes();
}

inline Transform decode_transform(std::span<const unsigned char> bytes, const std::string& source) {
  io::Reader r(bytes, source);
  if (r.get_bytes(4, "magic") != kTransformMagic) {
    throw FormatError(source + ": bad magic at byte offset 0 (expected \"DSUT\")");
  }
  if (const auto v = r.get<std::uint16_t>("version"); v != kTransformVersion) {
    throw FormatError(source + ": unsupported transform version " + std::to_string(v));
  }
  const auto kind_code = r.get<std::uint16_t>("kind");
  if (kind_code < 1 || kind_code > 4) {
    throw FormatError(source + ": unknown transform kind " + std::to_string(kind_code) +
                      " at byte offset 6");
  }
  const auto kind_value = static_cast<TransformKind>(kind_code);
  const auto d64 = r.get<std::uint64_t>("dimension");
  if (d64 == 0 || d64 > (1u << 20)) r.fail("implausible dimension " + std::to_string(d64));
  const auto dim = static_cast<std::size_t>(d64);

  std::vector<std::pair<std::string, std::size_t>> expected;
  expected.emplace_back("mean", dim);
  if (kind_value == TransformKind::Standardize) {
    expected.emplace_back("std", dim);
  } else {
    expected.emplace_back("basis", dim * dim);
    expected.emplace_back("eigenvalues", dim);
    if (kind_value != TransformKind::Pca) expected.emplace_back("scale", dim);
    if (kind_value == TransformKind::Ica) expected.emplace_back("demixing", dim * dim);
  }
  if (const auto count = r.get<std::uint64_t>("array count"); count != expected.size()) {
    throw FormatError(source + ": expected " + std::to_string(expected.size()) + " arrays, header says " +
                      std::to_string(count));
  }

  std::vector<std::vector<double>> arrays;
  for (const auto& [name, size] : expected) {
    const auto len = r.get<std::uint16_t>("array name length");
    const auto got = r.get_bytes(len, "array name");
    if (got != name) r.fail("expected array \"" + name + "\", found \"" + got + "\"");
    const auto n = r.get<std::uint64_t>("array length");
    if (n != size) {
      r.fail("array \"" + name + "\" has length " + std::to_string(n) + ", expected " +
             std::to_string(size));
    }
    std::vector<double> values(size);
    r.get_doubles(values, name);
    arrays.push_back(std::move(values));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last array");

  auto matrix = [&](std::size_t i) { return Matrix(dim, dim, std::move(arrays[i])); };
  auto pca = [&]() { return PcaTransform{std::move(arrays[0]), matrix(1), std::move(arrays[2])}; };
  switch (kind_value) {
    case TransformKind::Standardize:
      return StandardizeTransform{std::move(arrays[0]), std::move(arrays[1])};
    case TransformKind::Pca:
      return pca();
    case TransformKind::Whiten: {
      auto p = pca();
      return WhitenTransform{std::move(p), std::move(arrays[3])};
    }
    case TransformKind::Ica: {
      auto p = pca();
      WhitenTransform wt{std::move(p), std::move(arrays[3])};
      return IcaTransform{std::move(wt), matrix(4)};
    }
  }
  r.fail("unreachable transform kind");
}

inline void save_transform(const Transform& t, const std::filesystem::path& path) {
  io::write_file(path, encode_transform(t));
}

inline Transform load_transform(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_transform(bytes, path.string());
}

}  // namespace dsu
