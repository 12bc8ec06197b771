#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tslm/error.hpp"
#include "tslm/optim.hpp"
#include "tslm/rng.hpp"
#include "tslm/tensor.hpp"

using namespace tslm;

TEST_CASE("adamw first-step worked example") {
  PrecisionGuard precision(Precision::f64);
  Tensor p = Tensor::scalar(1.0, true);
  p.grad();
  p.storage().grad[0] = 1.0;
  AdamWConfig cfg;
  cfg.base_lr = 1e-3;
  cfg.weight_decay = 0.01;
  AdamW opt({p}, cfg);
  opt.step_with_lr(1e-3);
  CHECK(p.value() == doctest::Approx(0.99899).epsilon(1e-6));
}

TEST_CASE("adamw zero gradient cases") {
  PrecisionGuard precision(Precision::f64);
  Tensor p = Tensor::scalar(2.0, true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt({p}, cfg);
  opt.step_with_lr(1e-3);
  CHECK(p.value() == 2.0);

  Tensor q = Tensor::scalar(2.0, true);
  AdamWConfig wd;
  wd.weight_decay = 0.01;
  AdamW opt2({q}, wd);
  opt2.step_with_lr(1e-3);
  CHECK(q.value() == 2.0 * (1.0 - 1e-3 * 0.01));
}

TEST_CASE("adamw rejects non-finite gradients without touching parameters") {
  Tensor p = Tensor::scalar(1.5, true);
  p.grad();
  p.storage().grad[0] = std::nan("");
  AdamW opt({p}, AdamWConfig{});
  CHECK_THROWS_AS(opt.step_with_lr(1e-3), NumericError);
  CHECK(p.value() == 1.5);
  CHECK(opt.step_count() == 0);
}

TEST_CASE("adamw deterministic across identical runs") {
  auto run = [] {
    Rng rng(42);
    Tensor p = Tensor::rand_uniform({4, 4}, -1.0, 1.0, rng, true);
    AdamWConfig cfg;
    cfg.total_steps = 10;
    AdamW opt({p}, cfg);
    for (int s = 0; s < 10; ++s) {
      p.zero_grad();
      Tensor loss = sum(mul(p, p));
      backward(loss);
      opt.step();
    }
    return std::vector<double>(p.values().begin(), p.values().end());
  };
  CHECK(run() == run());
}

TEST_CASE("lr schedule oracle points") {
  CHECK(lr_at_step(330, 1e-4, 1000, 0.33) == doctest::Approx(1e-4));
  CHECK(lr_at_step(165, 1e-4, 1000, 0.33) == doctest::Approx(5e-5));
  CHECK(lr_at_step(665, 1e-4, 1000, 0.33) == doctest::Approx(5e-5));
  CHECK(lr_at_step(1001, 1e-4, 1000, 0.33) == 0.0);
  CHECK(lr_at_step(0, 1e-4, 1000, 0.33) == 0.0);
  CHECK(lr_at_step(1000, 1e-4, 1000, 0.33) == 0.0);
}

TEST_CASE("lr schedule piecewise-linear with a single peak") {
  const std::int64_t total = 200;
  const double base = 1e-4;
  double prev = lr_at_step(0, base, total, 0.33);
  int direction_changes = 0;
  int last_sign = 0;
  for (std::int64_t s = 1; s <= total; ++s) {
    double cur = lr_at_step(s, base, total, 0.33);
    CHECK(cur >= 0.0);
    CHECK(cur <= base + 1e-12);
    // continuity at the sample spacing
    CHECK(std::abs(cur - prev) <= base / (0.33 * total) + 1e-12);
    int sign = cur > prev ? 1 : (cur < prev ? -1 : 0);
    if (sign != 0 && last_sign != 0 && sign != last_sign) ++direction_changes;
    if (sign != 0) last_sign = sign;
    prev = cur;
  }
  CHECK(direction_changes == 1);
}
