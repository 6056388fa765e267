#include "gain/adam.hpp"

#include <cmath>

GAIN_NAMESPACE_BEGIN

AdamState AdamState::for_store(const ParameterStore& params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const Parameter& p : params) {
    s.first_moment.emplace_back(p.value.shape(), Real(0));
    s.second_moment.emplace_back(p.value.shape(), Real(0));
  }
  return s;
}

void adam_step(ParameterStore& params, const GradientSet& grads, AdamState& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw ConfigError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params[i].value) ||
        !state.first_moment[i].same_shape(params[i].value)) {
      throw ConfigError("adam_step: shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) {
      throw NumericFault("non-finite gradient for parameter " + params[i].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params[i].value;
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<Real>(mj);
      v[j] = static_cast<Real>(vj);
      const double m_hat = mj / c1;
      const double v_hat = vj / c2;
      theta[j] -= static_cast<Real>(state.learning_rate * m_hat / (std::sqrt(v_hat) + state.delta));
    }
  }
}

GAIN_NAMESPACE_END
