#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "binpick/layers.hpp"

namespace binpick {

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Compares an analytic gradient against central finite differences,
// element-wise; returns the maximum relative error.
//   loss:     Tensor -> scalar
//   analytic: gradient of loss at `input`, same shape
template <class S, class LossFn>
double grad_check(LossFn&& loss, const Tensor<S>& analytic, Tensor<S> input,
                  double eps) {
  if (eps <= 0) throw ContractViolation("grad_check: eps must be > 0");
  double worst = 0.0;
  for (std::int64_t i = 0; i < input.size(); ++i) {
    const S saved = input[i];
    input[i] = static_cast<S>(saved + eps);
    const double lp = static_cast<double>(loss(input));
    input[i] = static_cast<S>(saved - eps);
    const double lm = static_cast<double>(loss(input));
    input[i] = saved;
    const double fd = (lp - lm) / (2.0 * eps);
    worst = std::max(worst, relative_error(static_cast<double>(analytic[i]), fd));
  }
  return worst;
}

// Layer-level check through a fixed random linear probe of the output:
// L(x) = sum_i w_i * forward(x)_i. Verifies the input gradient and, for
// parameterized layers, every param gradient. Returns the max relative error.
// Finite differences run through a double-precision shadow of the layer so
// the oracle side resolves well below the 32-bit tolerance.
template <class S>
double grad_check_layer(Layer<S>& layer, const Tensor<S>& input, double eps,
                        Rng& rng) {
  const Tensor<S> out0 = layer_forward(layer, input);
  Tensor<S> probe(out0.shape());
  for (std::int64_t i = 0; i < probe.size(); ++i)
    probe[i] = static_cast<S>(rng.uniform(-1.0, 1.0));

  std::vector<Param<S>*> params;
  collect_params(layer, params);
  for (Param<S>* p : params) p->grad.set_zero();
  const Tensor<S> din = layer_backward(layer, input, probe);

  Layer<double> shadow = cast_layer<double>(layer);
  const Tensor<double> probe_d = probe.template cast<double>();
  auto loss_d = [&](const Tensor<double>& x) -> double {
    const Tensor<double> y = layer_forward(shadow, x);
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.size(); ++i) acc += y[i] * probe_d[i];
    return acc;
  };

  double worst = grad_check(loss_d, din.template cast<double>(),
                            input.template cast<double>(), eps);

  std::vector<Param<double>*> shadow_params;
  collect_params(shadow, shadow_params);
  const Tensor<double> input_d = input.template cast<double>();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param<double>* sp = shadow_params[pi];
    const Tensor<S>& analytic = params[pi]->grad;
    for (std::int64_t i = 0; i < sp->value.size(); ++i) {
      const double saved = sp->value[i];
      sp->value[i] = saved + eps;
      const double lp = loss_d(input_d);
      sp->value[i] = saved - eps;
      const double lm = loss_d(input_d);
      sp->value[i] = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      worst = std::max(worst,
                       relative_error(static_cast<double>(analytic[i]), fd));
    }
  }
  return worst;
}

}  // namespace binpick
