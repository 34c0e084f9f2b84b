#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace fewshot {

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over an ordered list of parameter tensors. The caller passes the
// same tensors in the same order on every step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  long steps() const { return step_; }

  void step(const std::vector<Eigen::MatrixXd*>& params,
            const std::vector<Eigen::MatrixXd>& grads) {
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        v_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i].cwiseAbs2();
      const auto m_hat = m_[i].array() / c1;
      const auto v_hat = v_[i].array() / c2;
      params[i]->array() -= config_.learning_rate * m_hat / (v_hat.sqrt() + config_.eps);
    }
  }

 private:
  AdamConfig config_;
  long step_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

}  // namespace fewshot
