#include "fewshot/autodiff.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "fewshot/error.hpp"

namespace fewshot::ad {

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool tracked = false;
  for (const Var& v : inputs) tracked = tracked || nodes_[v.id].tracked;
  Node node{std::move(value), {}, {}, tracked};
  if (tracked) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& node = nodes_[v.id];
  if (!node.tracked) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[v.id];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) {
    throw Error(ErrorKind::DimensionMismatch, "backward root must be 1x1");
  }
  accumulate(root, Matrix::Ones(1, 1));
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.size() == 0) continue;
    node.backward(*this, node.grad, node.value);
  }
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::DimensionMismatch, op);
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "matmul");
  return a.tape->record(a.value() * b.value(), {a, b},
                        [a, b](Tape& t, const Matrix& g, const Matrix&) {
                          if (t.tracked(a)) t.accumulate(a, g * b.value().transpose());
                          if (t.tracked(b)) t.accumulate(b, a.value().transpose() * g);
                        });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "matmul_nt");
  return a.tape->record(a.value() * b.value().transpose(), {a, b},
                        [a, b](Tape& t, const Matrix& g, const Matrix&) {
                          if (t.tracked(a)) t.accumulate(a, g * b.value());
                          if (t.tracked(b)) t.accumulate(b, g.transpose() * a.value());
                        });
}

Var matmul_tn(Var a, Var b) {
  if (a.rows() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "matmul_tn");
  return a.tape->record(a.value().transpose() * b.value(), {a, b},
                        [a, b](Tape& t, const Matrix& g, const Matrix&) {
                          if (t.tracked(a)) t.accumulate(a, b.value() * g.transpose());
                          if (t.tracked(b)) t.accumulate(b, a.value() * g);
                        });
}

Var transpose(Var a) {
  return a.tape->record(a.value().transpose(), {a},
                        [a](Tape& t, const Matrix& g, const Matrix&) {
                          t.accumulate(a, g.transpose());
                        });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  return a.tape->record(a.value() + b.value(), {a, b},
                        [a, b](Tape& t, const Matrix& g, const Matrix&) {
                          t.accumulate(a, g);
                          t.accumulate(b, g);
                        });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  return a.tape->record(a.value() - b.value(), {a, b},
                        [a, b](Tape& t, const Matrix& g, const Matrix&) {
                          t.accumulate(a, g);
                          t.accumulate(b, -g);
                        });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "add_row");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape->record(std::move(out), {a, row},
                        [a, row](Tape& t, const Matrix& g, const Matrix&) {
                          t.accumulate(a, g);
                          if (t.tracked(row)) t.accumulate(row, g.colwise().sum());
                        });
}

Var cwise_mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "cwise_mul");
  return a.tape->record(a.value().cwiseProduct(b.value()), {a, b},
                        [a, b](Tape& t, const Matrix& g, const Matrix&) {
                          if (t.tracked(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                          if (t.tracked(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                        });
}

Var scale(Var a, double s) {
  return a.tape->record(a.value() * s, {a},
                        [a, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g * s); });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0).matrix());
  });
}

Var softmax_rows(Var a, const RowMask* valid_cols) {
  const Matrix& x = a.value();
  if (valid_cols != nullptr && valid_cols->size() != x.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "softmax mask width");
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (valid_cols == nullptr || (*valid_cols)(c)) peak = std::max(peak, x(r, c));
    }
    if (!std::isfinite(peak)) throw Error(ErrorKind::AllMasked, "softmax row has no valid entry");
    double total = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (valid_cols != nullptr && !(*valid_cols)(c)) continue;
      out(r, c) = std::exp(x(r, c) - peak);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    Eigen::VectorXd inner = (g.cwiseProduct(y)).rowwise().sum();
    Matrix dx = y.cwiseProduct(g - inner.replicate(1, g.cols()));
    t.accumulate(a, dx);
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Matrix& in = x.value();
  const Eigen::Index n = in.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw Error(ErrorKind::DimensionMismatch, "layer_norm parameters");
  }
  Matrix normed(in.rows(), n);
  Eigen::VectorXd inv_std(in.rows());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const double mu = in.row(r).mean();
    const double var = (in.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normed.row(r) = (in.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (normed.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return x.tape->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, normed, inv_std](Tape& t, const Matrix& g, const Matrix&) {
        if (t.tracked(gain)) t.accumulate(gain, g.cwiseProduct(normed).colwise().sum());
        if (t.tracked(bias)) t.accumulate(bias, g.colwise().sum());
        if (!t.tracked(x)) return;
        const double n = static_cast<double>(g.cols());
        Matrix dnorm = (g.array().rowwise() * gain.value().row(0).array()).matrix();
        Matrix dx(g.rows(), g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double mean_d = dnorm.row(r).sum() / n;
          const double mean_dx = dnorm.row(r).dot(normed.row(r)) / n;
          dx.row(r) = inv_std(r) * (dnorm.row(r).array() - mean_d - normed.row(r).array() * mean_dx);
        }
        t.accumulate(x, dx);
      });
}

Var max_pool_rows(Var x, const RowMask& valid_rows) {
  const Matrix& in = x.value();
  if (valid_rows.size() != in.rows()) throw Error(ErrorKind::DimensionMismatch, "max_pool mask");
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(in.cols()), -1);
  Matrix out(1, in.cols());
  for (Eigen::Index c = 0; c < in.cols(); ++c) {
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
      if (!valid_rows(r)) continue;
      auto& best = arg[static_cast<std::size_t>(c)];
      if (best < 0 || in(r, c) > in(best, c)) best = r;
    }
    if (arg[static_cast<std::size_t>(c)] < 0) throw Error(ErrorKind::AllMasked, "max_pool");
    out(0, c) = in(arg[static_cast<std::size_t>(c)], c);
  }
  return x.tape->record(std::move(out), {x}, [x, arg](Tape& t, const Matrix& g, const Matrix&) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < dx.cols(); ++c) dx(arg[static_cast<std::size_t>(c)], c) = g(0, c);
    t.accumulate(x, dx);
  });
}

Var harmonic(Var a, Var b, double eps) {
  require_same_shape(a.value(), b.value(), "harmonic");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  Matrix da(av.rows(), av.cols());
  Matrix db(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.size(); ++i) {
    const double s = av(i) + bv(i);
    if (std::abs(s) < eps) {
      out(i) = da(i) = db(i) = 0.0;
      continue;
    }
    const double den = s + (s > 0 ? eps : -eps);
    out(i) = 2.0 * av(i) * bv(i) / den;
    da(i) = (2.0 * bv(i) - out(i)) / den;
    db(i) = (2.0 * av(i) - out(i)) / den;
  }
  return a.tape->record(std::move(out), {a, b},
                        [a, b, da, db](Tape& t, const Matrix& g, const Matrix&) {
                          t.accumulate(a, g.cwiseProduct(da));
                          t.accumulate(b, g.cwiseProduct(db));
                        });
}

Var row_mean(Var a) {
  Matrix out = a.value().rowwise().mean();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const double n = static_cast<double>(a.cols());
    t.accumulate(a, (g / n).replicate(1, a.cols()));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::DimensionMismatch, "concat_rows of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw Error(ErrorKind::DimensionMismatch, "concat_rows");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape->record(
      std::move(out), parts, [inputs](Tape& t, const Matrix& g, const Matrix&) {
        Eigen::Index at = 0;
        for (const Var& p : inputs) {
          if (t.tracked(p)) t.accumulate(p, g.middleRows(at, p.rows()));
          at += p.rows();
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::DimensionMismatch, "concat_cols of nothing");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw Error(ErrorKind::DimensionMismatch, "concat_cols");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape->record(
      std::move(out), parts, [inputs](Tape& t, const Matrix& g, const Matrix&) {
        Eigen::Index at = 0;
        for (const Var& p : inputs) {
          if (t.tracked(p)) t.accumulate(p, g.middleCols(at, p.cols()));
          at += p.cols();
        }
      });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw Error(ErrorKind::IndexOutOfRange, "slice_rows");
  }
  return a.tape->record(a.value().middleRows(start, count), {a},
                        [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
                          Matrix dx = Matrix::Zero(a.rows(), a.cols());
                          dx.middleRows(start, count) = g;
                          t.accumulate(a, dx);
                        });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw Error(ErrorKind::IndexOutOfRange, "slice_cols");
  }
  return a.tape->record(a.value().middleCols(start, count), {a},
                        [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
                          Matrix dx = Matrix::Zero(a.rows(), a.cols());
                          dx.middleCols(start, count) = g;
                          t.accumulate(a, dx);
                        });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= tv.rows()) {
      throw Error(ErrorKind::IndexOutOfRange, "gather_rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return table.tape->record(std::move(out), {table},
                            [table, idx](Tape& t, const Matrix& g, const Matrix&) {
                              Matrix dt = Matrix::Zero(table.rows(), table.cols());
                              for (std::size_t i = 0; i < idx.size(); ++i) {
                                dt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                              }
                              t.accumulate(table, dt);
                            });
}

Var row_normalize(Var a) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0)) throw Error(ErrorKind::ZeroNormVector, "row_normalize");
  }
  Matrix out = x.array().colwise() / norms.array();
  return a.tape->record(std::move(out), {a},
                        [a, norms](Tape& t, const Matrix& g, const Matrix& y) {
                          Eigen::VectorXd inner = g.cwiseProduct(y).rowwise().sum();
                          Matrix dx = (g - y.cwiseProduct(inner.replicate(1, y.cols())));
                          dx.array().colwise() /= norms.array();
                          t.accumulate(a, dx);
                        });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var cross_entropy_rows(Var logits, std::span<const int> targets) {
  const Matrix& x = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != x.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "cross_entropy targets");
  }
  if (x.rows() == 0) throw Error(ErrorKind::EmptyTargets, "cross_entropy");
  Matrix probs(x.rows(), x.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int target = targets[static_cast<std::size_t>(r)];
    if (target < 0 || target >= x.cols()) throw Error(ErrorKind::IndexOutOfRange, "target class");
    const double peak = x.row(r).maxCoeff();
    const double log_z = peak + std::log((x.row(r).array() - peak).exp().sum());
    probs.row(r) = (x.row(r).array() - log_z).exp();
    loss += log_z - x(r, target);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(x.rows());
  std::vector<int> tgt(targets.begin(), targets.end());
  return logits.tape->record(std::move(out), {logits},
                             [logits, probs, tgt](Tape& t, const Matrix& g, const Matrix&) {
                               Matrix d = probs;
                               for (std::size_t r = 0; r < tgt.size(); ++r) {
                                 d(static_cast<Eigen::Index>(r), tgt[r]) -= 1.0;
                               }
                               t.accumulate(logits, d * (g(0, 0) / static_cast<double>(d.rows())));
                             });
}

}  // namespace fewshot::ad
