#include "fewshot/contrastive.hpp"

#include <numeric>
#include <vector>

#include "fewshot/error.hpp"

namespace fewshot {

ad::Var info_nce(ad::Var anchors, ad::Var positives, double tau) {
  if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "info_nce views differ in shape");
  }
  if (anchors.rows() < 2) throw Error(ErrorKind::BatchTooSmall, "info_nce needs B >= 2");
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be positive");
  std::vector<int> diagonal(static_cast<std::size_t>(anchors.rows()));
  std::iota(diagonal.begin(), diagonal.end(), 0);
  ad::Var logits = ad::scale(ad::cosine_matrix(anchors, positives), 1.0 / tau);
  return ad::cross_entropy_rows(logits, diagonal);
}

double info_nce(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives, double tau) {
  ad::Tape tape;
  return info_nce(tape.constant(anchors), tape.constant(positives), tau).scalar();
}

}  // namespace fewshot
