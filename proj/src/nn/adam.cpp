#include "npst3/nn/adam.hpp"

#include <cmath>

#include "npst3/errors.hpp"

namespace npst3::nn {

void adam_step(AdamState &state, std::span<Param *const> params)
{
  for (std::size_t i = 0; i < params.size(); ++i)
  {
    if (!params[i]->grad.all_finite())
    {
      throw NumericError("non-finite gradient in parameter #" + std::to_string(i) + " ('" + params[i]->name +
                         "', shape " + shape_string(params[i]->grad.shape()) + ")");
    }
  }
  if (state.first_moment.empty())
  {
    for (auto *p : params)
    {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size())
  {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i)
  {
    if (state.first_moment[i].shape() != params[i]->value.shape() || params[i]->grad.shape() != params[i]->value.shape())
    {
      throw ShapeError("adam_step: shape mismatch for parameter #" + std::to_string(i));
    }
  }

  ++state.step;
  double const t   = static_cast<double>(state.step);
  double const bc1 = 1.0 - std::pow(state.beta1, t);
  double const bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i)
  {
    Tensor       &w = params[i]->value;
    Tensor const &g = params[i]->grad;
    Tensor       &m = state.first_moment[i];
    Tensor       &v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j)
    {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      double const m_hat = m[j] / bc1;
      double const v_hat = v[j] / bc2;
      w[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace npst3::nn
