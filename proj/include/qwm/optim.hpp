#pragma once

// Adaptive-moment gradient descent over a fixed parameter list.

#include <cmath>
#include <vector>

#include "qwm/tensor.hpp"

namespace qwm::optim {

class Adam {
 public:
  Adam(std::vector<tensor::Tensor> params, double lr = 3e-4, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8, double clip_norm = 100.0)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
        clip_norm_(clip_norm) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  // applies global-norm clipping, then one update; clears gradients after
  double step() {
    double norm = tensor::clip_gradients(params_, clip_norm_);
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& val = params_[i].val();
      auto& grad = params_[i].grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < val.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * grad[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * grad[j] * grad[j];
        val[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
        grad[j] = 0.0;
      }
    }
    return norm;
  }

  const std::vector<tensor::Tensor>& params() const { return params_; }
  long long steps_taken() const { return t_; }

 private:
  std::vector<tensor::Tensor> params_;
  double lr_, beta1_, beta2_, eps_, clip_norm_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace qwm::optim
