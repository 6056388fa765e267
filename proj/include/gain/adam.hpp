#pragma once

#include <cstdint>
#include <vector>

#include "gain/parameters.hpp"

GAIN_NAMESPACE_BEGIN

/// Bias-corrected Adam (Kingma & Ba). Moment buffers are aligned with the
/// ParameterStore they were created for.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState for_store(const ParameterStore& params, double learning_rate);
};

/// One update of every parameter. Throws NumericFault naming the parameter
/// when a gradient is non-finite; parameters are untouched in that case.
void adam_step(ParameterStore& params, const GradientSet& grads, AdamState& state);

GAIN_NAMESPACE_END
