#pragma once

#include <cmath>
#include <vector>

#include "dlr/tensor.hpp"

namespace dlr {

// Linear warmup to lr_max, then cosine decay to zero at the final step.
inline double warmup_cosine_lr(long long step, long long total_steps, long long warmup_steps,
                               double lr_max) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (step >= total_steps) return 0.0;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return lr_max * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// AdamW with decoupled weight decay. Decay is applied only to parameters
// whose slot is marked decayable (matrices yes, biases and norm parameters
// no). Hyperparameters follow the conventional defaults; tests pin them.
struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <typename T>
class AdamW {
 public:
  struct Slot {
    Tensor<T>* param;
    bool decay;
  };

  AdamW(std::vector<Slot> slots, AdamWConfig cfg) : slots_(std::move(slots)), cfg_(cfg) {
    m_.resize(slots_.size());
    v_.resize(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      m_[i] = Tensor<T>(slots_[i].param->shape);
      v_[i] = Tensor<T>(slots_[i].param->shape);
    }
  }

  // grads[i] must match slots[i] in shape.
  void step(const std::vector<Tensor<T>>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      Tensor<T>& p = *slots_[i].param;
      const Tensor<T>& g = grads[i];
      for (std::size_t j = 0; j < p.data.size(); ++j) {
        const double gj = static_cast<double>(g.data[j]);
        const double mj = cfg_.beta1 * static_cast<double>(m_[i].data[j]) + (1.0 - cfg_.beta1) * gj;
        const double vj =
            cfg_.beta2 * static_cast<double>(v_[i].data[j]) + (1.0 - cfg_.beta2) * gj * gj;
        m_[i].data[j] = static_cast<T>(mj);
        v_[i].data[j] = static_cast<T>(vj);
        double update = (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps);
        if (slots_[i].decay) update += cfg_.weight_decay * static_cast<double>(p.data[j]);
        p.data[j] = static_cast<T>(static_cast<double>(p.data[j]) - lr * update);
      }
    }
  }

  long long step_count() const { return t_; }

 private:
  std::vector<Slot> slots_;
  AdamWConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  long long t_ = 0;
};

}  // namespace dlr
