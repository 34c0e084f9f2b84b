#pragma once

#include "fewshot/autodiff.hpp"

namespace fewshot {

// In-batch InfoNCE over cosine similarity. Row i of `positives` is the
// positive for row i of `anchors`; every other row of `positives` is a
// negative:
//   L = -1/B sum_i log( exp(c_ii / tau) / sum_j exp(c_ij / tau) )
// with c_ij = cos(anchors_i, positives_j). Throws BatchTooSmall for B < 2.
ad::Var info_nce(ad::Var anchors, ad::Var positives, double tau);
double info_nce(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives, double tau);

}  // namespace fewshot
