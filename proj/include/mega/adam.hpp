#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mega/common.hpp"
#include "mega/tape.hpp"

namespace mega {

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // classic L2: added to the gradient pre-moments
};

/// Adaptive-moment optimizer with bias correction. Moment buffers are shaped
/// like the parameters on first use; the parameter list must stay stable
/// across steps.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return step_; }

  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
    if (params.size() != grads.size())
      throw NumericError("adam: parameter/gradient list size mismatch");
    if (m_.empty()) {
      for (const Tensor* p : params) {
        m_.push_back(Tensor::zeros(p->shape));
        v_.push_back(Tensor::zeros(p->shape));
      }
    }
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& p = *params[k];
      const Tensor& g = *grads[k];
      if (!p.same_shape(g) || !p.same_shape(m_[k]))
        throw NumericError(msg("adam: shape mismatch ", Tensor::shape_str(p.shape), " vs ",
                               Tensor::shape_str(g.shape)));
      for (std::size_t i = 0; i < p.size(); ++i) {
        double grad = g.data[i] + cfg_.weight_decay * p.data[i];
        m_[k].data[i] = cfg_.beta1 * m_[k].data[i] + (1.0 - cfg_.beta1) * grad;
        v_[k].data[i] = cfg_.beta2 * v_[k].data[i] + (1.0 - cfg_.beta2) * grad * grad;
        double mhat = m_[k].data[i] / bc1;
        double vhat = v_[k].data[i] / bc2;
        p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::uint64_t step_ = 0;
};

}  // namespace mega
