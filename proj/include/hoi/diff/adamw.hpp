#pragma once

// AdamW with bias correction and decoupled weight decay.  Updates run in
// fixed parameter order, so training is deterministic.

#include <cmath>
#include <vector>

#include "hoi/diff/tensor.hpp"

namespace hoi::diff {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const Tensor& p : params_) {
      if (!p.requires_grad()) fail("AdamW: parameter without requires_grad");
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int64_t step_count() const { return t_; }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      auto& val = params_[pi].mutable_value();
      const auto& g = params_[pi].grad();
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (size_t i = 0; i < val.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        // decoupled decay: applied directly to the weight, not via the grad
        val[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * val[i]);
        if (!std::isfinite(val[i]))
          fail_numeric(str_cat("AdamW: parameter ", pi, " became non-finite at step ", t_));
      }
    }
  }

  void zero_grad() {
    for (Tensor& p : params_) {
      auto& g = p.mutable_grad();
      std::fill(g.begin(), g.end(), 0.0);
    }
  }

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

// warmup then cosine decay, used by the flow trainer
inline double warmup_cosine_lr(int64_t step, int64_t total, int64_t warmup, double lr_start,
                               double lr_peak) {
  if (step < warmup)
    return lr_start + (lr_peak - lr_start) * static_cast<double>(step) /
                          static_cast<double>(warmup > 0 ? warmup : 1);
  double u = static_cast<double>(step - warmup) /
             static_cast<double>(std::max<int64_t>(1, total - warmup));
  return lr_peak * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, u)));
}

}  // namespace hoi::diff
