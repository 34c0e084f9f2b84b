#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every operation eagerly (values are computed on the spot)
// and keeps a backward closure for each node that depends on a tracked
// leaf. Nodes built only from constants carry no closure, so running a
// forward pass over constants doubles as cheap inference.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fewshot::ad {

using Matrix = Eigen::MatrixXd;
using RowMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  using Backward =
      std::function<void(Tape&, const Matrix& grad_out, const Matrix& value_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient is wanted.
  Var variable(Matrix value);
  // Leaf that never receives a gradient.
  Var constant(Matrix value);

  // Registers an op result. `backward` is kept only if an input is tracked.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var root);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  // Gradient accumulated on `v`; zeros if nothing flowed into it.
  Matrix grad(Var v) const;
  bool tracked(Var v) const { return nodes_[v.id].tracked; }

  void accumulate(Var v, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool tracked = false;
  };
  // deque keeps references stable while nodes are appended.
  std::deque<Node> nodes_;
};

// Linear algebra. Weights follow the (out x in) convention, rows are samples.
Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var matmul_tn(Var a, Var b);  // a^T * b
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
Var cwise_mul(Var a, Var b);
Var scale(Var a, double s);

Var tanh(Var a);
Var relu(Var a);

// Row-wise softmax. When `valid_cols` is given, columns marked false get
// probability zero; a row with no valid column raises AllMasked.
Var softmax_rows(Var a, const RowMask* valid_cols = nullptr);

// Row-wise layer normalization with learnable (1 x n) gain and bias.
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

// Column-wise max over the rows flagged valid; result is 1 x n. Ties go to
// the first row.
Var max_pool_rows(Var x, const RowMask& valid_rows);

// Elementwise 2ab / (a + b + eps * sign(a + b)); zero where |a + b| < eps.
Var harmonic(Var a, Var b, double eps = 1e-8);

// Mean over columns, n x d -> n x 1.
Var row_mean(Var a);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

// Selects rows of a lookup table (embedding lookup); gradient scatters back.
Var gather_rows(Var table, std::span<const int> indices);

// Divides every row by its L2 norm. Raises ZeroNormVector on a zero row.
Var row_normalize(Var a);

Var sum(Var a);
Var mean(Var a);

// Mean negative log-softmax probability of `targets[i]` in row i; 1 x 1.
Var cross_entropy_rows(Var logits, std::span<const int> targets);

// Cosine similarity matrix between the rows of a and the rows of b.
inline Var cosine_matrix(Var a, Var b) { return matmul_nt(row_normalize(a), row_normalize(b)); }

}  // namespace fewshot::ad
