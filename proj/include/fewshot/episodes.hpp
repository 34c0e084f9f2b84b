#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fewshot/corpus.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

struct EpisodeSpec {
  int n_way = 4;
  int k_shot = 1;
  int q_query = 5;
  std::uint64_t seed = 0;
};

struct LabeledRef {
  const Utterance* utterance = nullptr;
  int class_index = 0;  // episode-local
};

// One N-way K-shot task. `class_map[i]` is the global label of local class i.
struct Episode {
  std::vector<LabeledRef> support;  // class-major, K per class
  std::vector<LabeledRef> query;    // class-major, Q per class
  std::vector<std::string> class_map;
  std::uint64_t seed = 0;

  int n_way() const { return static_cast<int>(class_map.size()); }
};

// N classes uniformly without replacement from `class_subset`, then K+Q
// utterances per class without replacement (first K go to support).
Episode sample_episode(const Corpus& corpus, const std::set<std::string>& class_subset,
                       const EpisodeSpec& spec, Rng& rng);

// The episode for training step `index` under master seed `spec.seed`;
// independent of how many episodes were drawn before it.
Episode episode_at(const Corpus& corpus, const std::set<std::string>& class_subset,
                   const EpisodeSpec& spec, std::uint64_t index);

// Fixed evaluation task: K seeded support samples per class, every other
// sample of those classes in the query set. Classes indexed in label order.
Episode test_protocol(const Corpus& corpus, const std::set<std::string>& test_classes, int k_shot,
                      std::uint64_t seed);

// Stratified per-class split; each class contributes ceil(train_fraction*n)
// (at most n-1) samples to the train half.
std::pair<Corpus, Corpus> standard_split(const Corpus& corpus, double train_fraction,
                                         std::uint64_t seed);

// {"classes": [...], "support_ids": [...], "query_ids": [...], "seed": n}
std::string episode_to_json(const Episode& episode);

}  // namespace fewshot
