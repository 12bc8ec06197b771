#include "tslm/optim.hpp"

#include <cmath>

#include "tslm/error.hpp"

namespace tslm {

double lr_at_step(std::int64_t step, double base_lr, std::int64_t total_steps,
                  double warmup_ratio) {
  if (total_steps <= 0) return base_lr;
  if (warmup_ratio <= 0.0 || warmup_ratio >= 1.0) {
    throw ParameterError("lr_at_step: warmup_ratio must be in (0,1)");
  }
  if (step < 0) throw ParameterError("lr_at_step: negative step");
  if (step > total_steps) return 0.0;
  const double warm = warmup_ratio * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s <= warm) return base_lr * s / warm;
  return base_lr * (static_cast<double>(total_steps) - s) /
         (static_cast<double>(total_steps) - warm);
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
}

double AdamW::current_lr() const {
  return lr_at_step(t_, cfg_.base_lr, cfg_.total_steps, cfg_.warmup_ratio);
}

void AdamW::step() {
  step_with_lr(lr_at_step(t_ + 1, cfg_.base_lr, cfg_.total_steps, cfg_.warmup_ratio));
}

void AdamW::step_with_lr(double lr) {
  // Validate every gradient before touching any parameter so a bad step
  // aborts atomically.
  for (const Tensor& p : params_) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient, step aborted");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    const auto g = p.grad();
    auto vals = p.mutable_values();
    const Precision prec = p.precision();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double m = cfg_.beta1 * m_[pi][i] + (1.0 - cfg_.beta1) * g[i];
      double v = cfg_.beta2 * v_[pi][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      m_[pi][i] = detail::round_to(m, prec);
      v_[pi][i] = detail::round_to(v, prec);
      const double m_hat = m_[pi][i] / bc1;
      const double v_hat = v_[pi][i] / bc2;
      const double update =
          lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * vals[i]);
      vals[i] = detail::round_to(vals[i] - update, prec);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace tslm
