// Training-cost estimate: closed-form check of the per-token cost, the
// published budget anchor, and linearity in each input.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eegfm/flops.hpp"

using namespace eegfm;

TEST_CASE("per-token cost recomputed from first principles") {
  FlopsInputs in;
  in.d_tokens = 1000.0;
  in.n_params = 2e6;
  in.layers = 3.0;
  in.heads = 4.0;
  in.head_dim = 16.0;
  in.tokens_per_sample = 50.0;
  in.throughput = 1e12;
  in.mfu = 0.25;

  const FlopsEstimate est = flops_estimate(in);
  const double per_token = 6.0 * 2e6 + 12.0 * 3.0 * 4.0 * 16.0 * 50.0;
  CHECK(est.total_flops == doctest::Approx(1000.0 * per_token).epsilon(1e-15));
  CHECK(est.seconds == doctest::Approx(est.total_flops / 0.25e12).epsilon(1e-15));
  CHECK(est.gpu_hours == doctest::Approx(est.seconds / 3600.0).epsilon(1e-15));
}

TEST_CASE("defaults land on the published ~260 GPU-hour budget") {
  const FlopsEstimate est = flops_estimate(FlopsInputs{});
  CHECK(est.gpu_hours == doctest::Approx(260.0).epsilon(0.05));
  // And the exact value is pinned so accidental edits surface.
  CHECK(est.gpu_hours == doctest::Approx(262.977334508).epsilon(1e-9));
}

TEST_CASE("estimate is linear in token count and inverse in delivered throughput") {
  FlopsInputs in;  // defaults
  const FlopsEstimate base = flops_estimate(in);

  FlopsInputs doubled = in;
  doubled.d_tokens *= 2.0;
  CHECK(flops_estimate(doubled).total_flops ==
        doctest::Approx(2.0 * base.total_flops).epsilon(1e-12));
  CHECK(flops_estimate(doubled).gpu_hours == doctest::Approx(2.0 * base.gpu_hours).epsilon(1e-12));

  FlopsInputs faster = in;
  faster.mfu = 1.0;  // from 0.5
  CHECK(flops_estimate(faster).seconds == doctest::Approx(0.5 * base.seconds).epsilon(1e-12));
  CHECK(flops_estimate(faster).total_flops == base.total_flops);  // cost itself unchanged

  // The attention term scales with layers; the parameter term does not.
  FlopsInputs deeper = in;
  deeper.layers *= 2.0;
  const double attn = 12.0 * in.layers * in.heads * in.head_dim * in.tokens_per_sample;
  const double expect = in.d_tokens * (6.0 * in.n_params + 2.0 * attn);
  CHECK(flops_estimate(deeper).total_flops == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("zero attention inputs reduce to the dense 6ND rule") {
  FlopsInputs in;
  in.d_tokens = 5e9;
  in.n_params = 1e8;
  in.layers = 0.0;
  const FlopsEstimate est = flops_estimate(in);
  CHECK(est.total_flops == doctest::Approx(6.0 * 1e8 * 5e9).epsilon(1e-15));
}

TEST_CASE("invalid inputs are rejected") {
  FlopsInputs in;
  in.throughput = 0.0;
  CHECK_THROWS_AS(flops_estimate(in), std::invalid_argument);
  in = FlopsInputs{};
  in.mfu = 0.0;
  CHECK_THROWS_AS(flops_estimate(in), std::invalid_argument);
  in = FlopsInputs{};
  in.n_params = -1.0;
  CHECK_THROWS_AS(flops_estimate(in), std::invalid_argument);
  in = FlopsInputs{};
  in.d_tokens = -1.0;
  CHECK_THROWS_AS(flops_estimate(in), std::invalid_argument);
}
