#pragma once

#include <stdexcept>

namespace eegfm {

// Inputs to the training-cost estimate. Defaults reproduce the published
// base-model budget: token count = 60000 h of signal * 3600 s/h * 1.1
// (overlap) * 68 channels * 17 epochs, 72M parameters, and an A100-class
// device at 50% utilization.
struct FlopsInputs {
  double d_tokens = 60000.0 * 3600.0 * 1.1 * 68.0 * 17.0;
  double n_params = 72e6;
  double layers = 23.0;
  double heads = 8.0;
  double head_dim = 64.0;
  double tokens_per_sample = 68.0 * 11.0;
  double throughput = 312e12;  // peak FLOP/s
  double mfu = 0.5;            // achieved fraction of peak
};

struct FlopsEstimate {
  double total_flops = 0.0;
  double seconds = 0.0;
  double gpu_hours = 0.0;
};

// tau = D * (6N + 12 L H Q T) / (P * eta): dense parameter cost plus the
// quadratic attention term, both per token, divided by delivered throughput.
inline FlopsEstimate flops_estimate(const FlopsInputs& in) {
  if (in.throughput <= 0.0) throw std::invalid_argument("flops_estimate: throughput must be positive");
  if (in.mfu <= 0.0) throw std::invalid_argument("flops_estimate: mfu must be positive");
  if (in.d_tokens < 0.0 || in.n_params < 0.0 || in.layers < 0.0 || in.heads < 0.0 ||
      in.head_dim < 0.0 || in.tokens_per_sample < 0.0)
    throw std::invalid_argument("flops_estimate: inputs must be non-negative");
  FlopsEstimate out;
  const double per_token =
      6.0 * in.n_params + 12.0 * in.layers * in.heads * in.head_dim * in.tokens_per_sample;
  out.total_flops = in.d_tokens * per_token;
  out.seconds = out.total_flops / (in.throughput * in.mfu);
  out.gpu_hours = out.seconds / 3600.0;
  return out;
}

}  // namespace eegfm
