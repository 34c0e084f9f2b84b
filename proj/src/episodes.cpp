#include "fewshot/episodes.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "fewshot/error.hpp"

namespace fewshot {

Episode sample_episode(const Corpus& corpus, const std::set<std::string>& class_subset,
                       const EpisodeSpec& spec, Rng& rng) {
  if (spec.n_way < 1 || spec.k_shot < 1 || spec.q_query < 1) {
    throw Error(ErrorKind::InvalidArgument, "n_way, k_shot, q_query must be positive");
  }
  if (class_subset.size() < static_cast<std::size_t>(spec.n_way)) {
    throw Error(ErrorKind::InsufficientClasses,
                std::to_string(class_subset.size()) + " classes available for " +
                    std::to_string(spec.n_way) + "-way episodes");
  }
  std::vector<std::string> classes(class_subset.begin(), class_subset.end());
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(static_cast<std::size_t>(spec.n_way));

  Episode ep;
  ep.class_map = classes;
  ep.seed = spec.seed;
  const auto need = static_cast<std::size_t>(spec.k_shot + spec.q_query);
  for (int c = 0; c < spec.n_way; ++c) {
    const auto& label = classes[static_cast<std::size_t>(c)];
    std::vector<std::size_t> pool = corpus.indices_of(label);
    if (pool.size() < need) throw Error(ErrorKind::InsufficientSamples, label);
    for (std::size_t i = 0; i < need; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    for (std::size_t i = 0; i < need; ++i) {
      LabeledRef ref{&corpus.utterances()[pool[i]], c};
      (i < static_cast<std::size_t>(spec.k_shot) ? ep.support : ep.query).push_back(ref);
    }
  }
  return ep;
}

Episode episode_at(const Corpus& corpus, const std::set<std::string>& class_subset,
                   const EpisodeSpec& spec, std::uint64_t index) {
  Rng rng = make_rng(spec.seed, "episode", index);
  return sample_episode(corpus, class_subset, spec, rng);
}

Episode test_protocol(const Corpus& corpus, const std::set<std::string>& test_classes, int k_shot,
                      std::uint64_t seed) {
  if (k_shot < 1) throw Error(ErrorKind::InvalidArgument, "k_shot must be positive");
  if (test_classes.empty()) throw Error(ErrorKind::InsufficientClasses, "no test classes");
  Rng rng = make_rng(seed, "test-protocol");
  Episode ep;
  ep.seed = seed;
  int c = 0;
  for (const auto& label : test_classes) {
    std::vector<std::size_t> pool = corpus.indices_of(label);
    if (pool.size() <= static_cast<std::size_t>(k_shot)) {
      throw Error(ErrorKind::InsufficientSamples, label);
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      LabeledRef ref{&corpus.utterances()[pool[i]], c};
      (i < static_cast<std::size_t>(k_shot) ? ep.support : ep.query).push_back(ref);
    }
    ep.class_map.push_back(label);
    ++c;
  }
  return ep;
}

std::pair<Corpus, Corpus> standard_split(const Corpus& corpus, double train_fraction,
                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "train_fraction must lie in (0, 1)");
  }
  Rng rng = make_rng(seed, "standard-split");
  std::vector<Utterance> train, test;
  for (const auto& label : corpus.label_vocab()) {
    std::vector<std::size_t> pool = corpus.indices_of(label);
    if (pool.size() < 2) throw Error(ErrorKind::ClassTooSmall, label);
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto n = static_cast<double>(pool.size());
    auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * n - 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, pool.size() - 1);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      (i < n_train ? train : test).push_back(corpus.utterances()[pool[i]]);
    }
  }
  return {Corpus(std::move(train)), Corpus(std::move(test))};
}

std::string episode_to_json(const Episode& episode) {
  nlohmann::json j;
  j["classes"] = episode.class_map;
  std::vector<std::string> support, query;
  for (const auto& r : episode.support) support.push_back(r.utterance->id);
  for (const auto& r : episode.query) query.push_back(r.utterance->id);
  j["support_ids"] = support;
  j["query_ids"] = query;
  j["seed"] = episode.seed;
  return j.dump();
}

}  // namespace fewshot
