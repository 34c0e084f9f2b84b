#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fewshot/corpus.hpp"
#include "fewshot/error.hpp"
#include "support/fixtures.hpp"

using namespace fewshot;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no exception";
  return ErrorKind::InvalidArgument;
}

Corpus corpus_with(const std::vector<std::pair<std::string, int>>& counts) {
  std::vector<std::string> lines;
  for (const auto& [label, n] : counts)
    for (int i = 0; i < n; ++i) lines.push_back("BOS q" + std::to_string(i) + " EOS " + label);
  return parse_atis_format(lines);
}

std::size_t intersection(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::vector<std::string> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out.size();
}

}  // namespace

TEST(Corpus, ParsesAtisLine) {
  Corpus c = parse_atis_format({"BOS a b c EOS flight"});
  ASSERT_EQ(c.size(), 1u);
  const Utterance& u = c.utterances()[0];
  EXPECT_EQ(u.tokens, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(u.label, "flight");
  EXPECT_EQ(u.id, "u1");
}

TEST(Corpus, AtisFramingErrors) {
  EXPECT_EQ(kind_of([] { parse_atis_format({"BOS x EOS"}); }), ErrorKind::MalformedLine);
  EXPECT_EQ(kind_of([] { parse_atis_format({"x y EOS flight"}); }), ErrorKind::MalformedLine);
  EXPECT_EQ(kind_of([] { parse_atis_format({"BOS x y flight"}); }), ErrorKind::MalformedLine);
  EXPECT_EQ(kind_of([] { parse_atis_format({"BOS x EOS a b"}); }), ErrorKind::MalformedLine);
  EXPECT_EQ(kind_of([] { parse_atis_format({"BOS EOS flight"}); }), ErrorKind::EmptyQuery);
  try {
    parse_atis_format({"BOS ok EOS a", "", "BOS broken"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Corpus, SkipsBlankAndCommentLines) {
  Corpus c = parse_atis_format({"# header", "", "  ", "BOS a EOS x", "BOS b EOS y"});
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.utterances()[0].id, "u4");
}

TEST(Corpus, CountsPerClass) {
  Corpus c = parse_atis_format({"BOS a EOS flight", "BOS b EOS airfare", "BOS c EOS flight",
                                "BOS d EOS airfare", "BOS e EOS flight"});
  std::map<std::string, std::size_t> expected{{"airfare", 2}, {"flight", 3}};
  EXPECT_EQ(c.per_class_counts(), expected);
  EXPECT_EQ(c.label_vocab(), (std::vector<std::string>{"airfare", "flight"}));
  EXPECT_EQ(c.indices_of("airfare"), (std::vector<std::size_t>{1, 3}));
  ASSERT_NE(c.find("u2"), nullptr);
  EXPECT_EQ(c.find("u2")->label, "airfare");
  EXPECT_EQ(c.find("nope"), nullptr);
}

TEST(Corpus, Tsv) {
  Corpus c = parse_tsv({"کراچی موسم\tInformational"});
  EXPECT_EQ(c.utterances()[0].label, "Informational");
  EXPECT_EQ(c.utterances()[0].tokens.size(), 2u);
  EXPECT_EQ(kind_of([] { parse_tsv({"abc"}); }), ErrorKind::MalformedLine);
  EXPECT_EQ(kind_of([] { parse_tsv({"\tlabel"}); }), ErrorKind::MalformedLine);
  EXPECT_EQ(kind_of([] { parse_tsv({"text\t"}); }), ErrorKind::MalformedLine);
  EXPECT_EQ(kind_of([] { parse_tsv({}); }), ErrorKind::EmptyCorpus);
}

TEST(Corpus, NfcNormalization) {
  // "e" + combining acute composes to U+00E9.
  EXPECT_EQ(nfc_normalize("e\xCC\x81"), "\xC3\xA9");
  Corpus a = parse_tsv({"caf\xC3\xA9\tx"});
  Corpus b = parse_tsv({"cafe\xCC\x81\tx"});
  EXPECT_EQ(a.utterances()[0].tokens, b.utterances()[0].tokens);
  EXPECT_EQ(tokenize("  a\tb  c "), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Corpus, FilterSmallClasses) {
  Corpus c = corpus_with({{"A", 6}, {"B", 7}});
  Corpus f = filter_small_classes(c);
  EXPECT_EQ(f.label_vocab(), (std::vector<std::string>{"B"}));
  EXPECT_EQ(f.size(), 7u);

  Corpus same = filter_small_classes(corpus_with({{"A", 100}, {"B", 100}}));
  EXPECT_EQ(same.size(), 200u);

  Corpus twice = filter_small_classes(f);
  EXPECT_EQ(twice.size(), f.size());
  EXPECT_EQ(twice.per_class_counts(), f.per_class_counts());

  EXPECT_EQ(kind_of([&] { filter_small_classes(corpus_with({{"A", 3}})); }), ErrorKind::EmptyCorpus);
  EXPECT_EQ(kind_of([&] { filter_small_classes(c, 0); }), ErrorKind::InvalidArgument);
}

TEST(Corpus, AtisScaleFixture) {
  Corpus raw = parse_atis_format(fixture::atis_lines());
  Corpus f = filter_small_classes(raw);
  EXPECT_EQ(f.label_vocab().size(), 16u);
  EXPECT_EQ(f.size(), 5836u);
  std::size_t sum = 0;
  for (const auto& [_, n] : f.per_class_counts()) sum += n;
  EXPECT_EQ(sum, f.size());
}

TEST(Corpus, ClassSplitArithmetic) {
  std::vector<std::pair<std::string, int>> counts;
  for (int i = 0; i < 16; ++i) counts.push_back({"c" + std::to_string(100 + i), 8});
  Corpus c = corpus_with(counts);
  ClassSplit s = make_class_split(c, 0.25, 0.5, 42);
  EXPECT_EQ(s.c_train.size(), 4u);
  EXPECT_EQ(s.c_val.size(), 6u);
  EXPECT_EQ(s.c_test.size(), 6u);

  ClassSplit again = make_class_split(c, 0.25, 0.5, 42);
  EXPECT_EQ(s.c_train, again.c_train);
  EXPECT_EQ(s.c_val, again.c_val);
  EXPECT_EQ(s.c_test, again.c_test);

  EXPECT_EQ(kind_of([] { make_class_split(corpus_with({{"a", 3}, {"b", 3}}), 0.5, 0.5, 1); }),
            ErrorKind::TooFewClasses);
}

TEST(Corpus, ClassSplitsDisjointAcrossSeeds) {
  std::vector<std::pair<std::string, int>> counts;
  for (int i = 0; i < 9; ++i) counts.push_back({"k" + std::to_string(i), 3});
  Corpus c = corpus_with(counts);
  for (double seen : {0.25, 0.5, 0.75}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      ClassSplit s = make_class_split(c, seen, 0.5, seed);
      EXPECT_EQ(intersection(s.c_train, s.c_val), 0u);
      EXPECT_EQ(intersection(s.c_train, s.c_test), 0u);
      EXPECT_EQ(intersection(s.c_val, s.c_test), 0u);
      EXPECT_EQ(s.c_train.size() + s.c_val.size() + s.c_test.size(), 9u);
      EXPECT_FALSE(s.c_val.empty());
      EXPECT_FALSE(s.c_test.empty());
    }
  }
}

TEST(Corpus, TsvRoundTrip) {
  auto dir = fixture::temp_dir("corpus");
  Corpus c = parse_tsv({"hello world\tgreet", "bye\tleave"});
  write_tsv(c, (dir / "c.tsv").string());
  Corpus back = parse_tsv(read_lines((dir / "c.tsv").string()));
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back.utterances()[i].tokens, c.utterances()[i].tokens);
    EXPECT_EQ(back.utterances()[i].label, c.utterances()[i].label);
  }
  std::filesystem::remove_all(dir);
  EXPECT_EQ(kind_of([&] { read_lines((dir / "missing").string()); }), ErrorKind::Io);
}
