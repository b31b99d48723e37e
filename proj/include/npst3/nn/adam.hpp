#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "npst3/nn/layers.hpp"

namespace npst3::nn {

struct AdamState
{
  double              learning_rate = 1e-3;
  double              beta1         = 0.9;
  double              beta2         = 0.999;
  double              epsilon       = 1e-8;
  std::uint64_t       step          = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  AdamState() = default;
  explicit AdamState(double lr)
    : learning_rate(lr)
  {}
};

// One bias-corrected Adam step over `params`, lazily sizing the moments on
// first use. Throws NumericError, before touching anything, if any gradient
// is non-finite.
void adam_step(AdamState &state, std::span<Param *const> params);

}  // namespace npst3::nn
