#pragma once

#include <cstdint>
#include <vector>

#include "tslm/tensor.hpp"

namespace tslm {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double base_lr = 1e-4;
  std::int64_t total_steps = 0;  // 0 -> constant base_lr, no schedule
  double warmup_ratio = 0.33;
};

// Warmup/linear-decay schedule: 0 -> base_lr over the first
// warmup_ratio*total_steps steps, then base_lr -> 0 at total_steps.
// Steps beyond total_steps return 0.
double lr_at_step(std::int64_t step, double base_lr, std::int64_t total_steps,
                  double warmup_ratio);

// Decoupled weight decay Adam with bias correction. Deterministic: the same
// parameters, gradients and state produce bit-identical updates.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  // One update using the scheduled learning rate (or base_lr without a
  // schedule). Throws NumericError and leaves parameters untouched if any
  // gradient is non-finite.
  void step();
  void step_with_lr(double lr);
  void zero_grad();

  std::int64_t step_count() const { return t_; }
  double current_lr() const;
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

}  // namespace tslm
