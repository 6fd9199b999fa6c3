#pragma once

#include <cmath>
#include <vector>

#include "binpick/tensor.hpp"

namespace binpick {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected ADAM update over all params; gradients are zeroed after
// the step. Non-finite gradients abort naming the offending param.
template <class S>
void adam_step(const std::vector<Param<S>*>& params, double lr,
               const AdamConfig& cfg = {}) {
  for (Param<S>* p : params) {
    if (!p->grad.all_finite())
      throw NumericError("adam_step: non-finite gradient in param '" + p->name +
                         "'");
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::int64_t i = 0; i < p->value.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]);
      const double m = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * g * g;
      p->m[i] = static_cast<S>(m);
      p->v[i] = static_cast<S>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p->value[i] =
          static_cast<S>(p->value[i] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
    p->grad.set_zero();
  }
}

template <class S>
void zero_grads(const std::vector<Param<S>*>& params) {
  for (Param<S>* p : params) p->grad.set_zero();
}

}  // namespace binpick
