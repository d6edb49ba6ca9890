#pragma once

// Discrete unit sequences: deduplication, byte-pair encoding over unit
// symbols, and bit-rate.
//
// Unit file: UTF-8 text, one utterance per line, `id<TAB>u0 u1 u2 ...`
// (an utterance with no units is `id<TAB>`).
//
// BPE model file: UTF-8 text. First line `#bpe base_vocab <B> vocab_size <V>`,
// then one merge per line `left right new` in training order. New symbols are
// numbered consecutively from B.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "dsu/binary_io.hpp"
#include "dsu/data.hpp"
#include "dsu/error.hpp"

namespace dsu {

using Unit = std::uint32_t;

struct UnitSequence {
  std::string id;
  std::vector<Unit> units;
  double duration_s = 0.0;
};

/// Collapse runs of equal adjacent units.
inline UnitSequence deduplicate(const UnitSequence& s) {
  UnitSequence out{s.id, {}, s.duration_s};
  out.units.reserve(s.units.size());
  for (Unit u : s.units) {
    if (out.units.empty() || out.units.back() != u) out.units.push_back(u);
  }
  return out;
}

struct BpeMerge {
  Unit left = 0;
  Unit right = 0;
  Unit symbol = 0;

  friend bool operator==(const BpeMerge&, const BpeMerge&) = default;
};

struct BpeModel {
  std::vector<BpeMerge> merges;
  std::size_t base_vocab = 0;
  std::size_t vocab_size = 0;  // base_vocab + merges.size()
};

namespace detail {

using Pair = std::pair<Unit, Unit>;

struct PairHash {
  std::size_t operator()(const Pair& p) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(p.first) << 32) | p.second);
  }
};

using PairCounts = std::unordered_map<Pair, std::int64_t, PairHash>;

inline PairCounts count_pairs(const std::vector<Unit>& s) {
  PairCounts c;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) ++c[{s[i], s[i + 1]}];
  return c;
}

/// Replace non-overlapping occurrences of (left, right), scanning left to right.
inline bool merge_in_place(std::vector<Unit>& s, Unit left, Unit right, Unit symbol) {
  std::size_t out = 0;
  bool changed = false;
  for (std::size_t i = 0; i < s.size();) {
    if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
      s[out++] = symbol;
      i += 2;
      changed = true;
    } else {
      s[out++] = s[i++];
    }
  }
  s.resize(out);
  return changed;
}

}  // namespace detail

/// Greedy BPE training. The most frequent adjacent pair (ties: smaller left,
/// then smaller right) is merged until vocab_size is reached or no pair occurs
/// at least twice. Pairs never span utterances.
inline BpeModel fit_bpe(const std::vector<UnitSequence>& corpus, std::size_t base_vocab,
                        std::size_t vocab_size) {
  if (base_vocab == 0) throw ParameterError("fit_bpe: base vocabulary must be positive");
  if (vocab_size <= base_vocab) {
    throw ParameterError("fit_bpe: vocab_size " + std::to_string(vocab_size) +
                         " must exceed base vocabulary " + std::to_string(base_vocab));
  }
  std::vector<std::vector<Unit>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& s : corpus) {
    for (Unit u : s.units) {
      if (u >= base_vocab) {
        throw ParameterError("fit_bpe: unit " + std::to_string(u) + " in " + s.id +
                             " is outside the base vocabulary of " + std::to_string(base_vocab));
      }
    }
    seqs.push_back(s.units);
  }

  // Global counts, a priority order (-count, left, right), and for every pair
  // the sequences that may contain it.
  detail::PairCounts counts;
  std::set<std::tuple<std::int64_t, Unit, Unit>> ranked;
  std::unordered_map<detail::Pair, std::set<std::size_t>, detail::PairHash> where;

  auto adjust = [&](const detail::Pair& p, std::int64_t delta) {
    auto& c = counts[p];
    if (c > 0) ranked.erase({-c, p.first, p.second});
    c += delta;
    if (c > 0) {
      ranked.insert({-c, p.first, p.second});
    } else {
      counts.erase(p);
    }
  };

  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (const auto& [p, c] : detail::count_pairs(seqs[i])) {
      adjust(p, c);
      where[p].insert(i);
    }
  }

  BpeModel model;
  model.base_vocab = base_vocab;
  while (base_vocab + model.merges.size() < vocab_size && !ranked.empty()) {
    const auto [neg_count, left, right] = *ranked.begin();
    if (-neg_count < 2) break;
    const auto symbol = static_cast<Unit>(base_vocab + model.merges.size());
    model.merges.push_back({left, right, symbol});

    const detail::Pair target{left, right};
    const auto holders = std::move(where[target]);
    where.erase(target);
    for (std::size_t i : holders) {
      auto before = detail::count_pairs(seqs[i]);
      if (!detail::merge_in_place(seqs[i], left, right, symbol)) continue;
      auto after = detail::count_pairs(seqs[i]);
      for (const auto& [p, c] : before) {
        auto it = after.find(p);
        const std::int64_t now = it == after.end() ? 0 : it->second;
        if (now != c) adjust(p, now - c);
      }
      for (const auto& [p, c] : after) {
        if (!before.contains(p)) adjust(p, c);
        where[p].insert(i);
      }
    }
  }
  model.vocab_size = base_vocab + model.merges.size();
  return model;
}

/// Apply merges in training order, each exhaustively left to right.
inline UnitSequence apply_bpe(const BpeModel& m, const UnitSequence& s) {
  for (Unit u : s.units) {
    if (u >= m.base_vocab) {
      throw ParameterError("apply_bpe: unit " + std::to_string(u) + " in " + s.id +
                           " is outside the base vocabulary of " + std::to_string(m.base_vocab));
    }
  }
  UnitSequence out = s;
  for (const auto& mg : m.merges) detail::merge_in_place(out.units, mg.left, mg.right, mg.symbol);
  return out;
}

/// Expand merged symbols back to base units.
inline UnitSequence expand_bpe(const BpeModel& m, const UnitSequence& s) {
  UnitSequence out{s.id, {}, s.duration_s};
  std::vector<Unit> stack;
  for (Unit u : s.units) {
    stack.push_back(u);
    while (!stack.empty()) {
      const Unit top = stack.back();
      stack.pop_back();
      if (top < m.base_vocab) {
        out.units.push_back(top);
        continue;
      }
      const std::size_t idx = top - m.base_vocab;
      if (idx >= m.merges.size()) {
        throw ParameterError("expand_bpe: symbol " + std::to_string(top) + " not in model");
      }
      stack.push_back(m.merges[idx].right);
      stack.push_back(m.merges[idx].left);
    }
  }
  return out;
}

/// Mean over utterances of N * log2(V) / U.
inline std::vector<double> bitrates(const std::vector<UnitSequence>& seqs, std::size_t vocab_size) {
  if (seqs.empty()) throw ParameterError("bitrate: no sequences");
  if (vocab_size < 2) throw ParameterError("bitrate: vocabulary size must be at least 2");
  const double bits = std::log2(static_cast<double>(vocab_size));
  std::vector<double> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) {
    if (!(s.duration_s > 0.0)) {
      throw ParameterError("bitrate: utterance " + s.id + " has non-positive duration");
    }
    out.push_back(static_cast<double>(s.units.size()) * bits / s.duration_s);
  }
  return out;
}

inline double bitrate(const std::vector<UnitSequence>& seqs, std::size_t vocab_size) {
  const auto per = bitrates(seqs, vocab_size);
  double sum = 0.0;
  for (double b : per) sum += b;
  return sum / static_cast<double>(per.size());
}

// ---------------------------------------------------------------------------
// Text formats

inline std::string format_units(const std::vector<UnitSequence>& seqs) {
  std::string out;
  for (const auto& s : seqs) {
    out += s.id;
    out += '\t';
    for (std::size_t i = 0; i < s.units.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(s.units[i]);
    }
    out += '\n';
  }
  return out;
}

/// Parse a unit file. Durations are left at 0; see attach_durations().
inline std::vector<UnitSequence> parse_units(std::string_view text, const std::string& source = "units") {
  std::vector<UnitSequence> out;
  std::set<std::string> seen;
  detail::for_each_record(text, [&](std::string_view line, std::size_t lineno) {
    const std::string where = source + ":" + std::to_string(lineno);
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw FormatError(where + ": missing tab after utterance id");
    UnitSequence s;
    s.id = std::string(line.substr(0, tab));
    if (s.id.empty()) throw FormatError(where + ": empty utterance id");
    if (!seen.insert(s.id).second) throw FormatError(where + ": duplicate utterance id " + s.id);
    std::istringstream is{std::string(line.substr(tab + 1))};
    std::string tok;
    while (is >> tok) {
      const auto v = detail::parse_count(tok, where);
      if (v > std::numeric_limits<Unit>::max()) throw FormatError(where + ": unit out of range");
      s.units.push_back(static_cast<Unit>(v));
    }
    out.push_back(std::move(s));
  });
  return out;
}

inline std::vector<UnitSequence> read_units(const std::filesystem::path& path) {
  return parse_units(io::read_text(path), path.string());
}

inline void write_units(const std::vector<UnitSequence>& seqs, const std::filesystem::path& path) {
  io::write_text(path, format_units(seqs));
}

/// Fill durations from a manifest; every sequence must have an entry.
inline void attach_durations(std::vector<UnitSequence>& seqs, const UtteranceManifest& manifest) {
  std::map<std::string, double> dur;
  for (const auto& e : manifest) dur[e.id] = e.duration_s;
  for (auto& s : seqs) {
    auto it = dur.find(s.id);
    if (it == dur.end()) throw DataError("no manifest duration for utterance " + s.id);
    s.duration_s = it->second;
  }
}

inline std::string format_bpe(const BpeModel& m) {
  std::string out = "#bpe base_vocab " + std::to_string(m.base_vocab) + " vocab_size " +
                    std::to_string(m.vocab_size) + "\n";
  for (const auto& mg : m.merges) {
    out += std::to_string(mg.left) + ' ' + std::to_string(mg.right) + ' ' + std::to_string(mg.symbol) + '\n';
  }
  return out;
}

inline BpeModel parse_bpe(std::string_view text, const std::string& source = "bpe") {
  BpeModel m;
  const auto nl = text.find('\n');
  const std::string header(text.substr(0, nl));
  {
    std::istringstream is(header);
    std::string tag, k1, k2;
    std::size_t base = 0, vocab = 0;
    if (!(is >> tag >> k1 >> base >> k2 >> vocab) || tag != "#bpe" || k1 != "base_vocab" ||
        k2 != "vocab_size" || base == 0) {
      throw FormatError(source + ":1: expected \"#bpe base_vocab <B> vocab_size <V>\"");
    }
    m.base_vocab = base;
    m.vocab_size = vocab;
  }
  const auto body = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  detail::for_each_record(body, [&](std::string_view line, std::size_t lineno) {
    const std::string where = source + ":" + std::to_string(lineno + 1);
    std::istringstream is{std::string(line)};
    std::string a, b, c, extra;
    if (!(is >> a >> b >> c) || (is >> extra)) throw FormatError(where + ": expected `left right new`");
    BpeMerge mg{static_cast<Unit>(detail::parse_count(a, where)),
                static_cast<Unit>(detail::parse_count(b, where)),
                static_cast<Unit>(detail::parse_count(c, where))};
    const auto expected = m.base_vocab + m.merges.size();
    if (mg.symbol != expected) {
      throw FormatError(where + ": new symbol " + c + ", expected " + std::to_string(expected));
    }
    if (mg.left >= expected || mg.right >= expected) {
      throw FormatError(where + ": merge refers to a symbol not yet defined");
    }
    m.merges.push_back(mg);
  });
  if (m.vocab_size != m.base_vocab + m.merges.size()) {
    throw FormatError(source + ": header vocab_size " + std::to_string(m.vocab_size) + " != base_vocab + " +
                      std::to_string(m.merges.size()) + " merges");
  }
  return m;
}

inline void save_bpe(const BpeModel& m, const std::filesystem::path& path) {
  io::write_text(path, format_bpe(m));
}

inline BpeModel load_bpe(const std::filesystem::path& path) {
  return parse_bpe(io::read_text(path), path.string());
}

}  // namespace dsu
