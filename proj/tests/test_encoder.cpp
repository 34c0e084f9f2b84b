#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "fewshot/encoder.hpp"
#include "fewshot/error.hpp"
#include "support/convert.hpp"
#include "support/fixtures.hpp"

using namespace fewshot;

namespace {

Corpus small_corpus() {
  return parse_tsv({"book a flight\tflight", "cheap fare please\tfare", "flight to lahore\tflight",
                    "what fare\tfare"});
}

// x = E[ids] + P; ctx = softmax(q k^T / sqrt(d)) v over real tokens;
// out = (x + ctx) W_out^T + b_out.
oracle::Mat toy_oracle(const ToyEncoder& enc, const std::vector<int>& ids, const std::vector<bool>& mask) {
  const auto& p = enc.params();
  const auto E = oracle::to_mat(p.token_embedding), P = oracle::to_mat(p.position_embedding);
  oracle::Mat x(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    x[i] = E[static_cast<std::size_t>(ids[i])];
    for (std::size_t c = 0; c < x[i].size(); ++c) x[i][c] += P[i][c];
  }
  const auto q = oracle::affine(x, oracle::to_mat(p.w_q), {});
  const auto k = oracle::affine(x, oracle::to_mat(p.w_k), {});
  const auto v = oracle::affine(x, oracle::to_mat(p.w_v), {});
  auto ctx = oracle::attention(q, k, v, mask);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t c = 0; c < x[i].size(); ++c) ctx[i][c] += x[i][c];
  return oracle::affine(ctx, oracle::to_mat(p.w_out), oracle::to_mat(p.b_out)[0]);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Encoder, PadOrTruncate) {
  auto a = pad_or_truncate({"a", "b"}, 4);
  EXPECT_EQ(a.tokens, (std::vector<std::string>{"a", "b", kPadToken, kPadToken}));
  EXPECT_TRUE(a.mask(0) && a.mask(1) && !a.mask(2) && !a.mask(3));
  auto b = pad_or_truncate({"a", "b", "c", "d", "e"}, 4);
  EXPECT_EQ(b.tokens, (std::vector<std::string>{"a", "b", "c", "d"}));
  EXPECT_EQ(b.mask.count(), 4);
  auto c = pad_or_truncate({"a"}, 1);
  EXPECT_EQ(c.tokens, (std::vector<std::string>{"a"}));
  EXPECT_TRUE(c.mask(0));
}

TEST(Encoder, VocabularyReservedFirst) {
  Vocabulary v = Vocabulary::from_corpus(small_corpus());
  EXPECT_EQ(v.token(Vocabulary::kPad), kPadToken);
  EXPECT_EQ(v.token(Vocabulary::kMask), kMaskToken);
  EXPECT_EQ(v.token(Vocabulary::kUnk), kUnkToken);
  EXPECT_EQ(v.id("never-seen"), Vocabulary::kUnk);
  EXPECT_TRUE(std::is_sorted(v.tokens().begin() + 3, v.tokens().end()));
}

TEST(Encoder, ToyForwardMatchesLoopOracle) {
  Corpus c = small_corpus();
  std::mt19937_64 rng(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ToyEncoder enc = ToyEncoder::initialize(Vocabulary::from_corpus(c), 6, 8, seed);
    // Scale up so the attention is far from uniform.
    enc.params().for_each([&](const char*, Matrix& m) { m = oracle::to_eigen(oracle::random_mat(rng, m.rows(), m.cols())); });
    const std::vector<std::string> tokens = {"book", "a", "cheap", "flight"};
    auto padded = pad_or_truncate(tokens, 6);
    std::vector<bool> mask(6);
    for (int i = 0; i < 6; ++i) mask[i] = padded.mask(i);

    auto out = encode_batch(enc, {&c.utterances()[0]}, 6);  // shape only
    ASSERT_EQ(out[0].values.rows(), 6);

    ad::Tape tape;
    auto bound = enc.bind(tape, false);
    Matrix h = enc.forward(bound, enc.ids(padded.tokens), padded.mask).value();
    auto expect = toy_oracle(enc, enc.ids(padded.tokens), mask);
    for (int r = 0; r < 4; ++r)
      for (int col = 0; col < 8; ++col) EXPECT_NEAR(h(r, col), expect[r][col], 1e-9);
  }
}

TEST(Encoder, EncodeBatchShapesAndPadding) {
  Corpus c = small_corpus();
  ToyEncoder enc = ToyEncoder::initialize(Vocabulary::from_corpus(c), 24, 32, 1);
  std::vector<const Utterance*> batch;
  for (int i = 0; i < 20; ++i) batch.push_back(&c.utterances()[i % 4]);
  auto out = encode_batch(enc, batch, 24);
  ASSERT_EQ(out.size(), 20u);
  for (const auto& e : out) {
    EXPECT_EQ(e.values.rows(), 24);
    EXPECT_EQ(e.values.cols(), 32);
    EXPECT_GE(e.valid_count(), 1);
    EXPECT_TRUE(e.values.allFinite());
    for (Eigen::Index r = 0; r < 24; ++r)
      if (!e.mask(r)) EXPECT_EQ(e.values.row(r).squaredNorm(), 0.0);
  }
}

TEST(Encoder, NoCrossExampleLeakage) {
  Corpus c = small_corpus();
  ToyEncoder enc = ToyEncoder::initialize(Vocabulary::from_corpus(c), 8, 16, 2);
  auto alone = encode_batch(enc, {&c.utterances()[2]}, 8);
  auto mixed = encode_batch(enc, {&c.utterances()[0], &c.utterances()[2], &c.utterances()[1]}, 8);
  EXPECT_EQ(alone[0].values, mixed[1].values);
  auto again = encode_batch(enc, {&c.utterances()[2]}, 8);
  EXPECT_EQ(alone[0].values, again[0].values);
}

TEST(Encoder, ZeroTablesGiveZeroEmbeddings) {
  Corpus c = small_corpus();
  ToyEncoder enc = ToyEncoder::zeros(Vocabulary::from_corpus(c), 8, 4);
  for (const auto& e : encode_batch(enc, {&c.utterances()[0], &c.utterances()[1]}, 8))
    EXPECT_EQ(e.values.cwiseAbs().maxCoeff(), 0.0);
  Matrix logits = mlm_logits(enc, {"book", kMaskToken, "flight"}, {1});
  EXPECT_EQ(logits.rows(), 1);
  EXPECT_EQ(logits.cols(), enc.vocab().size());
  EXPECT_EQ(logits.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encoder, MlmLogitsMatchMatmulOracle) {
  Corpus c = small_corpus();
  ToyEncoder enc = ToyEncoder::initialize(Vocabulary::from_corpus(c), 8, 6, 9);
  const std::vector<std::string> toks = {"cheap", kMaskToken, "please"};
  Matrix logits = mlm_logits(enc, toks, {1, 2});
  ASSERT_EQ(logits.rows(), 2);
  auto h = toy_oracle(enc, enc.ids(toks), {true, true, true});
  auto head = oracle::to_mat(enc.params().mlm_head);
  auto expect = oracle::matmul({h[1], h[2]}, head);
  for (int r = 0; r < 2; ++r)
    for (int v = 0; v < enc.vocab().size(); ++v) EXPECT_NEAR(logits(r, v), expect[r][v], 1e-9);

  PrecomputedStore store(4);
  EXPECT_THROW(mlm_logits(store, toks, {1}), Error);
  try {
    mlm_logits(store, toks, {1});
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BackendNotTrainable);
  }
}

TEST(Encoder, StoreLookupIsExact) {
  Corpus c = small_corpus();
  PrecomputedStore store(3);
  Eigen::MatrixXf m(2, 3);
  m << 0.1f, -2.5f, 3.25f, 1e-7f, 7.0f, -0.333f;
  store.insert("u1", m);
  auto out = encode_batch(store, {&c.utterances()[0]}, 2);
  EXPECT_EQ(out[0].values, m.cast<double>());
  EXPECT_EQ(out[0].mask.count(), 2);

  auto padded = encode_batch(store, {&c.utterances()[0]}, 4);
  EXPECT_EQ(padded[0].mask.count(), 2);
  EXPECT_EQ(padded[0].values.bottomRows(2).squaredNorm(), 0.0);

  try {
    encode_batch(store, {&c.utterances()[1]}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingEmbedding);
  }
  try {
    store.insert("u2", Eigen::MatrixXf::Zero(2, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Encoder, StoreRoundTripIsByteIdentical) {
  auto dir = fixture::temp_dir("store");
  std::mt19937 rng(1);
  std::normal_distribution<float> nd;
  PrecomputedStore store(5);
  for (int i = 0; i < 7; ++i) {
    Eigen::MatrixXf m(3 + i % 3, 5);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = nd(rng);
    store.insert("u" + std::to_string(i + 1), m);
  }
  store.save((dir / "a").string());
  PrecomputedStore back = PrecomputedStore::load((dir / "a").string());
  back.save((dir / "b").string());
  EXPECT_EQ(slurp(dir / "a" / "data.f32"), slurp(dir / "b" / "data.f32"));
  EXPECT_EQ(back.size(), 7u);
  EXPECT_EQ(back.at("u3"), store.at("u3"));
  std::filesystem::remove_all(dir);
}

TEST(Encoder, CheckpointRoundTrip) {
  auto dir = fixture::temp_dir("toy");
  ToyEncoder enc = ToyEncoder::initialize(Vocabulary::from_corpus(small_corpus()), 8, 6, 4);
  enc.save((dir / "enc.bin").string());
  ToyEncoder back = ToyEncoder::load((dir / "enc.bin").string());
  EXPECT_EQ(back.vocab().tokens(), enc.vocab().tokens());
  enc.params().for_each([&](const char* name, const Matrix& m) {
    back.params().for_each([&](const char* other, const Matrix& n) {
      if (std::string(name) == other) EXPECT_EQ(m, n) << name;
    });
  });
  std::filesystem::remove_all(dir);
}
