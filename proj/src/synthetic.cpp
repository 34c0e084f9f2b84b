#include "fewshot/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

namespace {

std::string two_digits(int v) { return (v < 10 ? "0" : "") + std::to_string(v); }

std::string token_name(int c, int w) { return "c" + two_digits(c) + "_w" + two_digits(w); }

}  // namespace

Corpus make_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.n_classes < 1 || spec.per_class < 1 || spec.tokens_per_class < 1 || spec.min_len < 1 ||
      spec.max_len < spec.min_len) {
    throw Error(ErrorKind::InvalidArgument, "synthetic corpus shape");
  }
  Rng rng = make_rng(spec.seed, "synthetic-corpus");
  std::uniform_int_distribution<int> length(spec.min_len, spec.max_len);
  std::uniform_int_distribution<int> word(0, spec.tokens_per_class - 1);
  std::vector<Utterance> out;
  for (int c = 0; c < spec.n_classes; ++c) {
    const std::string label = "intent_" + two_digits(c);
    for (int n = 0; n < spec.per_class; ++n) {
      Utterance u;
      u.id = "s" + two_digits(c) + "_" + std::to_string(n);
      u.label = label;
      const int len = length(rng);
      for (int i = 0; i < len; ++i) u.tokens.push_back(token_name(c, word(rng)));
      for (std::size_t i = 0; i < u.tokens.size(); ++i) {
        u.raw_text += (i ? " " : "") + u.tokens[i];
      }
      out.push_back(std::move(u));
    }
  }
  return Corpus(std::move(out));
}

ToyEncoder make_cluster_encoder(const Corpus& corpus, const SyntheticSpec& spec, int max_len) {
  if (spec.d_h < spec.n_classes) {
    throw Error(ErrorKind::DimensionMismatch, "need d_h >= n_classes for orthogonal centers");
  }
  ToyEncoder enc = ToyEncoder::initialize(Vocabulary::from_corpus(corpus), max_len, spec.d_h,
                                          derive_seed(spec.seed, "cluster-encoder"));
  ToyEncoderParams& p = enc.params();
  Rng rng = make_rng(spec.seed, "cluster-tokens");
  std::normal_distribution<double> noise(0.0, spec.sigma);
  const double radius = spec.separation * spec.sigma / std::sqrt(2.0);
  const Vocabulary& vocab = enc.vocab();
  for (int id = 0; id < vocab.size(); ++id) {
    for (int j = 0; j < spec.d_h; ++j) p.token_embedding(id, j) = noise(rng);
    const std::string& t = vocab.token(id);
    if (t.size() > 1 && t[0] == 'c') {
      const int c = std::stoi(t.substr(1, 2));
      if (c < spec.d_h) p.token_embedding(id, c) += radius;
    }
  }
  p.position_embedding.setZero();
  p.w_v.setZero();
  p.w_out.setIdentity();
  p.b_out.setZero();
  return enc;
}

}  // namespace fewshot
