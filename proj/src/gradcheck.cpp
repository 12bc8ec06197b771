#include "tslm/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "tslm/error.hpp"

namespace tslm {

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double fd_step) {
  PrecisionGuard precision(Precision::f64);

  Tensor probe = Tensor::from_values(x.shape(), {x.values().begin(), x.values().end()},
                                     /*requires_grad=*/true);
  Tensor loss = f(probe);
  if (loss.size() != 1) throw ContractError("grad_check: f must return a scalar");
  if (!std::isfinite(loss.value())) throw NumericError("grad_check: non-finite loss");
  backward(loss);
  const std::vector<double> g_ad(probe.grad().begin(), probe.grad().end());

  double worst = 0.0;
  std::vector<double> base(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    NoGradGuard no_grad;
    std::vector<double> plus = base, minus = base;
    plus[i] += fd_step;
    minus[i] -= fd_step;
    const double fp = f(Tensor::from_values(x.shape(), plus)).value();
    const double fm = f(Tensor::from_values(x.shape(), minus)).value();
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: non-finite intermediate");
    }
    const double g_fd = (fp - fm) / (2.0 * fd_step);
    const double denom = std::max({1.0, std::abs(g_ad[i]), std::abs(g_fd)});
    worst = std::max(worst, std::abs(g_ad[i] - g_fd) / denom);
  }
  return worst;
}

double grad_check_param(const std::function<Tensor()>& loss_fn, Tensor param, double fd_step) {
  PrecisionGuard precision(Precision::f64);

  param.zero_grad();
  Tensor loss = loss_fn();
  if (loss.size() != 1) throw ContractError("grad_check_param: loss must be scalar");
  if (!std::isfinite(loss.value())) throw NumericError("grad_check_param: non-finite loss");
  backward(loss);
  const std::vector<double> g_ad(param.grad().begin(), param.grad().end());

  double worst = 0.0;
  auto vals = param.mutable_values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    NoGradGuard no_grad;
    const double saved = vals[i];
    vals[i] = saved + fd_step;
    const double fp = loss_fn().value();
    vals[i] = saved - fd_step;
    const double fm = loss_fn().value();
    vals[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check_param: non-finite intermediate");
    }
    const double g_fd = (fp - fm) / (2.0 * fd_step);
    const double denom = std::max({1.0, std::abs(g_ad[i]), std::abs(g_fd)});
    worst = std::max(worst, std::abs(g_ad[i] - g_fd) / denom);
  }
  return worst;
}

}  // namespace tslm
