#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dsu/units.hpp"
#include "oracles.hpp"

using dsu::BpeModel;
using dsu::Unit;
using dsu::UnitSequence;

namespace {

UnitSequence seq(std::vector<Unit> u, double dur = 1.0, std::string id = "u") {
  return UnitSequence{std::move(id), std::move(u), dur};
}

std::vector<UnitSequence> random_corpus(std::mt19937_64& gen, Unit base) {
  std::uniform_int_distribution<std::size_t> n_utts(1, 8), len(0, 60);
  std::uniform_int_distribution<Unit> sym(0, base - 1);
  std::bernoulli_distribution repeat(0.4);
  std::vector<UnitSequence> corpus;
  const std::size_t n = n_utts(gen);
  for (std::size_t i = 0; i < n; ++i) {
    UnitSequence s{"u" + std::to_string(i), {}, 1.0};
    const std::size_t l = len(gen);
    for (std::size_t t = 0; t < l; ++t) s.units.push_back(!s.units.empty() && repeat(gen) ? s.units.back() : sym(gen));
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace

TEST(Dedup, Examples) {
  EXPECT_EQ(dsu::deduplicate(seq({1, 1, 2, 2, 2, 3})).units, (std::vector<Unit>{1, 2, 3}));
  EXPECT_TRUE(dsu::deduplicate(seq({})).units.empty());
  EXPECT_EQ(dsu::deduplicate(seq({5, 5, 5, 5})).units, (std::vector<Unit>{5}));
  EXPECT_EQ(dsu::deduplicate(seq({1, 2, 1})).units, (std::vector<Unit>{1, 2, 1}));
}

TEST(Dedup, KeepsDurationAndIsIdempotent) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 50; ++trial) {
    for (const auto& s : random_corpus(gen, 5)) {
      const auto d = dsu::deduplicate(s);
      EXPECT_EQ(d.duration_s, s.duration_s);
      EXPECT_EQ(d.id, s.id);
      EXPECT_EQ(dsu::deduplicate(d).units, d.units);
      EXPECT_EQ(d.units, oracle::dedup(s.units));
      EXPECT_LE(d.units.size(), s.units.size());
    }
  }
}

TEST(Bpe, SingleMerge) {
  const auto m = dsu::fit_bpe({seq({0, 1, 0, 1})}, 2, 3);
  ASSERT_EQ(m.merges.size(), 1u);
  EXPECT_EQ(m.merges[0], (dsu::BpeMerge{0, 1, 2}));
  EXPECT_EQ(m.vocab_size, 3u);
  EXPECT_EQ(dsu::apply_bpe(m, seq({0, 1, 0, 1})).units, (std::vector<Unit>{2, 2}));
}

TEST(Bpe, AllDistinctStopsEarly) {
  const auto m = dsu::fit_bpe({seq({0, 1, 2, 3}), seq({4, 5})}, 6, 100);
  EXPECT_TRUE(m.merges.empty());
  EXPECT_EQ(m.vocab_size, 6u);
}

TEST(Bpe, TieBreakSmallerPairFirst) {
  const auto m = dsu::fit_bpe({seq({1, 0, 1, 0, 1})}, 2, 3);  // (0,1) and (1,0) both twice
  ASSERT_EQ(m.merges.size(), 1u);
  EXPECT_EQ(m.merges[0], (dsu::BpeMerge{0, 1, 2}));
}

TEST(Bpe, MergesNeverCrossUtterances) {
  const auto m = dsu::fit_bpe({seq({0, 1}, 1, "a"), seq({2, 3}, 1, "b"), seq({1, 2}, 1, "c")}, 4, 10);
  EXPECT_TRUE(m.merges.empty());
  const auto m2 = dsu::fit_bpe({seq({0, 1}, 1, "a"), seq({0, 1}, 1, "b")}, 2, 10);
  ASSERT_EQ(m2.merges.size(), 1u);
}

TEST(Bpe, ApplyExamples) {
  BpeModel none{{}, 3, 3};
  EXPECT_EQ(dsu::apply_bpe(none, seq({2, 0, 1})).units, (std::vector<Unit>{2, 0, 1}));
  BpeModel one{{{0, 1, 2}}, 2, 3};
  EXPECT_EQ(dsu::apply_bpe(one, seq({0, 1, 0, 1, 1})).units, (std::vector<Unit>{2, 2, 1}));
  EXPECT_THROW(dsu::apply_bpe(one, seq({0, 2})), dsu::ParameterError);
}

TEST(Bpe, OverlapResolvedLeftToRight) {
  BpeModel m{{{0, 0, 1}}, 1, 2};
  EXPECT_EQ(dsu::apply_bpe(m, seq({0, 0, 0})).units, (std::vector<Unit>{1, 0}));
  EXPECT_EQ(dsu::apply_bpe(m, seq({0, 0, 0, 0})).units, (std::vector<Unit>{1, 1}));
}

TEST(Bpe, Rejections) {
  EXPECT_THROW(dsu::fit_bpe({seq({0, 1})}, 2, 2), dsu::ParameterError);
  EXPECT_THROW(dsu::fit_bpe({seq({0, 5})}, 2, 4), dsu::ParameterError);
  BpeModel m{{}, 2, 2};
  EXPECT_THROW(dsu::expand_bpe(m, seq({3})), dsu::ParameterError);
}

TEST(Bpe, MatchesBruteForceTrainer) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 60; ++trial) {
    const Unit base = 2 + static_cast<Unit>(trial % 6);
    auto corpus = random_corpus(gen, base);
    for (auto& s : corpus) s = dsu::deduplicate(s);
    const std::size_t vocab = base + 1 + static_cast<std::size_t>(trial % 25);
    const auto m = dsu::fit_bpe(corpus, base, vocab);

    std::vector<std::vector<Unit>> raw;
    for (const auto& s : corpus) raw.push_back(s.units);
    const auto ref = oracle::bpe_brute_force(raw, base, vocab);
    ASSERT_EQ(m.merges.size(), ref.size()) << "trial " << trial;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_EQ(m.merges[i], (dsu::BpeMerge{ref[i].left, ref[i].right, ref[i].symbol})) << "trial " << trial;
    }
    EXPECT_EQ(m.vocab_size, base + m.merges.size());

    // Replaying the merges reproduces the trainer's segmentation.
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      auto expect = raw[i];
      for (const auto& r : ref) expect = oracle::merge_naive(expect, r.left, r.right, r.symbol);
      EXPECT_EQ(dsu::apply_bpe(m, corpus[i]).units, expect);
    }
  }
}

TEST(Bpe, LosslessAndShrinking) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto corpus = random_corpus(gen, 4);
    std::vector<UnitSequence> dd;
    for (const auto& s : corpus) dd.push_back(dsu::deduplicate(s));
    const auto m = dsu::fit_bpe(dd, 4, 30);
    for (const auto& s : dd) {
      const auto enc = dsu::apply_bpe(m, s);
      EXPECT_LE(enc.units.size(), s.units.size());
      EXPECT_EQ(dsu::expand_bpe(m, enc).units, s.units);
      for (Unit u : enc.units) EXPECT_LT(u, m.vocab_size);
    }
  }
}

TEST(Bpe, FileRoundTrip) {
  oracle::TempDir dir;
  std::mt19937_64 gen(4);
  const auto m = dsu::fit_bpe(random_corpus(gen, 3), 3, 12);
  dsu::save_bpe(m, dir / "bpe.txt");
  const auto back = dsu::load_bpe(dir / "bpe.txt");
  EXPECT_EQ(back.merges, m.merges);
  EXPECT_EQ(back.base_vocab, m.base_vocab);
  EXPECT_EQ(back.vocab_size, m.vocab_size);
  EXPECT_EQ(dsu::format_bpe(BpeModel{{{0, 1, 2}}, 2, 3}), "#bpe base_vocab 2 vocab_size 3\n0 1 2\n");
}

TEST(Bpe, FileRejections) {
  EXPECT_THROW(dsu::parse_bpe("0 1 2\n"), dsu::FormatError);
  EXPECT_THROW(dsu::parse_bpe("#bpe base_vocab 2 vocab_size 3\n0 1 5\n"), dsu::FormatError);
  EXPECT_THROW(dsu::parse_bpe("#bpe base_vocab 2 vocab_size 3\n0 3 2\n"), dsu::FormatError);
  EXPECT_THROW(dsu::parse_bpe("#bpe base_vocab 2 vocab_size 4\n0 1 2\n"), dsu::FormatError);
}

TEST(Bitrate, DirectEvaluation) {
  std::vector<UnitSequence> one{seq(std::vector<Unit>(10, 0), 2.0)};
  EXPECT_NEAR(dsu::bitrate(one, 3000), 57.753734, 1e-4);  // 10 * log2(3000) / 2
  EXPECT_NEAR(dsu::bitrate(one, 3000), 5.0 * 11.550746785383243, 1e-12);
  EXPECT_DOUBLE_EQ(dsu::bitrate(one, 3000), 10.0 * std::log2(3000.0) / 2.0);
  EXPECT_EQ(dsu::bitrate({seq({}, 3.0)}, 3000), 0.0);
}

TEST(Bitrate, MeanOfUtterances) {
  // log2(4) = 2 bits per unit: 50 units / 1 s = 100, 150 units / 1 s = 300.
  std::vector<UnitSequence> two{seq(std::vector<Unit>(50, 0), 1.0), seq(std::vector<Unit>(150, 0), 1.0)};
  EXPECT_DOUBLE_EQ(dsu::bitrate(two, 4), 200.0);
  EXPECT_EQ(dsu::bitrates(two, 4), (std::vector<double>{100.0, 300.0}));
}

TEST(Bitrate, MonotoneInLength) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<std::size_t> len(0, 40);
  std::uniform_real_distribution<double> dur(0.5, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<UnitSequence> s;
    for (int i = 0; i < 5; ++i) s.push_back(seq(std::vector<Unit>(len(gen), 0), dur(gen)));
    const double before = dsu::bitrate(s, 3000);
    s[static_cast<std::size_t>(trial) % 5].units.push_back(1);
    EXPECT_GE(dsu::bitrate(s, 3000), before);
  }
}

TEST(Bitrate, Rejections) {
  EXPECT_THROW(dsu::bitrate({}, 3000), dsu::ParameterError);
  EXPECT_THROW(dsu::bitrate({seq({1}, 1.0)}, 1), dsu::ParameterError);
  EXPECT_THROW(dsu::bitrate({seq({1}, 0.0)}, 3000), dsu::ParameterError);
}

TEST(UnitFile, RoundTripWithEmptyLine) {
  const std::vector<UnitSequence> s{seq({3, 1, 4}, 1.0, "a"), seq({}, 1.0, "empty"), seq({9}, 1.0, "b")};
  const auto text = dsu::format_units(s);
  EXPECT_EQ(text, "a\t3 1 4\nempty\t\nb\t9\n");
  const auto back = dsu::parse_units(text);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0].units, s[0].units);
  EXPECT_TRUE(back[1].units.empty());
  EXPECT_EQ(back[2].id, "b");
}

TEST(UnitFile, Rejections) {
  EXPECT_THROW(dsu::parse_units("a 1 2\n"), dsu::FormatError);
  EXPECT_THROW(dsu::parse_units("a\t1 x\n"), dsu::FormatError);
  EXPECT_THROW(dsu::parse_units("a\t1\na\t2\n"), dsu::FormatError);
}

TEST(UnitFile, AttachDurations) {
  auto s = dsu::parse_units("a\t1 2\nb\t\n");
  dsu::attach_durations(s, dsu::parse_manifest("b\tb.dsuk\t0\t2.5\na\ta.dsuk\t2\t0.5\n", "/"));
  EXPECT_EQ(s[0].duration_s, 0.5);
  EXPECT_EQ(s[1].duration_s, 2.5);
  auto missing = dsu::parse_units("c\t1\n");
  EXPECT_THROW(dsu::attach_durations(missing, dsu::parse_manifest("a\ta\t1\t1\n", "/")), dsu::DataError);
}
