#pragma once

// Central-difference oracle for scalar functions of a few matrices.

#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "fewshot/autodiff.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Graph = std::function<fewshot::ad::Var(fewshot::ad::Tape&, const std::vector<fewshot::ad::Var>&)>;

inline double evaluate(const Graph& g, const std::vector<Matrix>& inputs) {
  fewshot::ad::Tape tape;
  std::vector<fewshot::ad::Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.constant(m));
  return g(tape, vars).scalar();
}

inline std::vector<Matrix> analytic(const Graph& g, const std::vector<Matrix>& inputs) {
  fewshot::ad::Tape tape;
  std::vector<fewshot::ad::Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.variable(m));
  tape.backward(g(tape, vars));
  std::vector<Matrix> out;
  for (const auto& v : vars) out.push_back(tape.grad(v));
  return out;
}

inline std::vector<Matrix> numeric(const Graph& g, std::vector<Matrix> inputs, double h = 1e-6) {
  std::vector<Matrix> out;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Matrix d(inputs[t].rows(), inputs[t].cols());
    for (Eigen::Index i = 0; i < inputs[t].size(); ++i) {
      const double x = inputs[t](i);
      inputs[t](i) = x + h;
      const double up = evaluate(g, inputs);
      inputs[t](i) = x - h;
      const double down = evaluate(g, inputs);
      inputs[t](i) = x;
      d(i) = (up - down) / (2 * h);
    }
    out.push_back(d);
  }
  return out;
}

// Largest per-tensor ||a - n|| / (||a|| + ||n||).
inline double max_rel_error(const Graph& g, const std::vector<Matrix>& inputs) {
  const auto a = analytic(g, inputs);
  const auto n = numeric(g, inputs);
  double worst = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double den = a[t].norm() + n[t].norm();
    if (den > 0) worst = std::max(worst, (a[t] - n[t]).norm() / den);
  }
  return worst;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  std::normal_distribution<double> nd(0.0, s);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = nd(rng);
  return m;
}

}  // namespace oracle
