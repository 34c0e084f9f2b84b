#include "fewshot/similarity.hpp"

namespace fewshot {

std::string_view similarity_name(SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::Angular: return "angular";
    case SimilarityKind::Bhattacharyya: return "bhattacharyya";
    case SimilarityKind::Chebyshev: return "chebyshev";
    case SimilarityKind::Cosine: return "cosine";
    case SimilarityKind::Dice: return "dice";
    case SimilarityKind::DotProduct: return "dot";
    case SimilarityKind::Euclidean: return "euclidean";
    case SimilarityKind::Hamming: return "hamming";
    case SimilarityKind::Jaccard: return "jaccard";
    case SimilarityKind::KlDivergence: return "kl";
    case SimilarityKind::L2: return "l2";
    case SimilarityKind::Manhattan: return "manhattan";
    case SimilarityKind::Pearson: return "pearson";
  }
  return "unknown";
}

std::optional<SimilarityKind> parse_similarity(std::string_view name) {
  for (SimilarityKind kind : kAllSimilarityKinds) {
    if (similarity_name(kind) == name) return kind;
  }
  return std::nullopt;
}

}  // namespace fewshot
