#pragma once

// Thirteen interchangeable scoring rules for query/prototype matching.
// Every rule is oriented so that a higher score means "more similar":
// distances are negated. KL and Bhattacharyya compare softmax(q) with
// softmax(p); Hamming compares signs with sign(0) treated as positive.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "fewshot/error.hpp"

namespace fewshot {

enum class SimilarityKind {
  Angular,
  Bhattacharyya,
  Chebyshev,
  Cosine,
  Dice,
  DotProduct,
  Euclidean,
  Hamming,
  Jaccard,
  KlDivergence,
  L2,
  Manhattan,
  Pearson,
};

inline constexpr std::array<SimilarityKind, 13> kAllSimilarityKinds = {
    SimilarityKind::Angular,   SimilarityKind::Bhattacharyya, SimilarityKind::Chebyshev,
    SimilarityKind::Cosine,    SimilarityKind::Dice,          SimilarityKind::DotProduct,
    SimilarityKind::Euclidean, SimilarityKind::Hamming,       SimilarityKind::Jaccard,
    SimilarityKind::KlDivergence, SimilarityKind::L2,         SimilarityKind::Manhattan,
    SimilarityKind::Pearson};

// Lowercase CLI token: angular bhattacharyya chebyshev cosine dice dot
// euclidean hamming jaccard kl l2 manhattan pearson.
std::string_view similarity_name(SimilarityKind kind);
std::optional<SimilarityKind> parse_similarity(std::string_view name);

namespace detail {

template <typename Derived>
auto log_softmax(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = x.maxCoeff();
  const Scalar log_z = peak + std::log((x.array() - peak).exp().sum());
  return (x.array() - log_z).eval();
}

template <typename Scalar>
Scalar safe_ratio(Scalar num, Scalar den) {
  if (!(den > Scalar(0))) throw Error(ErrorKind::ZeroNormVector, "similarity denominator is zero");
  return num / den;
}

}  // namespace detail

template <typename DerivedQ, typename DerivedP>
typename DerivedQ::Scalar score(SimilarityKind kind, const Eigen::MatrixBase<DerivedQ>& q,
                                const Eigen::MatrixBase<DerivedP>& p) {
  using Scalar = typename DerivedQ::Scalar;
  if (q.size() != p.size()) throw Error(ErrorKind::DimensionMismatch, "similarity operands");
  const auto qa = q.reshaped().array();
  const auto pa = p.reshaped().array();

  auto cosine = [](const auto& a, const auto& b) {
    const Scalar na = std::sqrt((a * a).sum());
    const Scalar nb = std::sqrt((b * b).sum());
    return detail::safe_ratio<Scalar>((a * b).sum(), na * nb);
  };

  switch (kind) {
    case SimilarityKind::Cosine:
      return cosine(qa, pa);
    case SimilarityKind::Angular: {
      const Scalar c = std::clamp(cosine(qa, pa), Scalar(-1), Scalar(1));
      return Scalar(1) - std::acos(c) / Scalar(M_PI);
    }
    case SimilarityKind::DotProduct:
      return (qa * pa).sum();
    case SimilarityKind::Euclidean:
      return -std::sqrt((qa - pa).square().sum());
    case SimilarityKind::L2:
      return -(qa - pa).square().sum();
    case SimilarityKind::Manhattan:
      return -(qa - pa).abs().sum();
    case SimilarityKind::Chebyshev:
      return -(qa - pa).abs().maxCoeff();
    case SimilarityKind::Pearson: {
      const auto qc = (qa - qa.mean()).eval();
      const auto pc = (pa - pa.mean()).eval();
      return cosine(qc, pc);
    }
    case SimilarityKind::Dice:
      return detail::safe_ratio<Scalar>(Scalar(2) * (qa * pa).sum(),
                                        qa.square().sum() + pa.square().sum());
    case SimilarityKind::Jaccard: {
      const Scalar dot = (qa * pa).sum();
      return detail::safe_ratio<Scalar>(dot, qa.square().sum() + pa.square().sum() - dot);
    }
    case SimilarityKind::Hamming: {
      Scalar mismatches = 0;
      for (Eigen::Index i = 0; i < qa.size(); ++i) {
        if ((qa(i) >= Scalar(0)) != (pa(i) >= Scalar(0))) mismatches += Scalar(1);
      }
      return -mismatches;
    }
    case SimilarityKind::KlDivergence: {
      const auto lq = detail::log_softmax(q.reshaped());
      const auto lp = detail::log_softmax(p.reshaped());
      return -(lq.exp() * (lq - lp)).sum();
    }
    case SimilarityKind::Bhattacharyya: {
      const auto lq = detail::log_softmax(q.reshaped());
      const auto lp = detail::log_softmax(p.reshaped());
      return std::log(((lq + lp) * Scalar(0.5)).exp().sum());
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown similarity kind");
}

// scores(i, j) = score(kind, queries.row(i), protos.row(j)).
template <typename DerivedQ, typename DerivedP>
Eigen::Matrix<typename DerivedQ::Scalar, Eigen::Dynamic, Eigen::Dynamic> score_matrix(
    SimilarityKind kind, const Eigen::MatrixBase<DerivedQ>& queries,
    const Eigen::MatrixBase<DerivedP>& protos) {
  if (queries.cols() != protos.cols()) throw Error(ErrorKind::DimensionMismatch, "score_matrix");
  Eigen::Matrix<typename DerivedQ::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(queries.rows(),
                                                                               protos.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    for (Eigen::Index j = 0; j < protos.rows(); ++j) {
      out(i, j) = score(kind, queries.row(i), protos.row(j));
    }
  }
  return out;
}

}  // namespace fewshot
