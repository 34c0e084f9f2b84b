#pragma once

// Separable toy benchmark: every class owns a small token set whose toy
// encoder embeddings are Gaussian draws around a class center. Centers sit
// on scaled orthogonal axes so any two are `separation * sigma` apart.

#include <cstdint>

#include "fewshot/corpus.hpp"
#include "fewshot/encoder.hpp"

namespace fewshot {

struct SyntheticSpec {
  int n_classes = 8;
  int per_class = 40;
  int tokens_per_class = 12;
  int min_len = 4;
  int max_len = 8;
  int d_h = 32;
  double sigma = 1.0;
  double separation = 6.0;
  std::uint64_t seed = 0;
};

// Labels "intent_00".., tokens "c00_w00"..; utterance ids "s<class>_<n>".
Corpus make_synthetic_corpus(const SyntheticSpec& spec);

// Token rows = center + sigma * N(0, I); zero positions; the attention value
// map is zero and the output map is the identity, so each position's
// embedding is its token's row. Query/key maps and the MLM head keep their
// random initialization so the encoder can be pretrained further.
ToyEncoder make_cluster_encoder(const Corpus& corpus, const SyntheticSpec& spec, int max_len);

}  // namespace fewshot
