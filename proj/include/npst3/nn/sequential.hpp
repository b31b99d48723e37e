#pragma once

#include <memory>
#include <random>
#include <vector>

#include "npst3/nn/layers.hpp"

namespace npst3::nn {

// Ordered chain of layers with value semantics (copies deep-clone layers).
class Sequential
{
public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerSpec> const &specs, std::uint64_t seed = 0);

  Sequential(Sequential const &other);
  Sequential &operator=(Sequential const &other);
  Sequential(Sequential &&) noexcept            = default;
  Sequential &operator=(Sequential &&) noexcept = default;

  void add(std::unique_ptr<Layer> layer);

  Tensor forward(Tensor const &input, Mode mode);
  Tensor backward(Tensor const &grad_output);

  std::vector<Param *>  parameters();
  std::vector<Tensor *> buffers();
  std::vector<LayerSpec> specs() const;

  std::size_t size() const
  {
    return layers_.size();
  }
  Layer &layer(std::size_t i)
  {
    return *layers_.at(i);
  }

  void zero_grad();

  // Weights of Conv1D / TransposedConv1D / Dense and their biases.
  void init_uniform(double range, std::mt19937_64 &rng);
  void init_glorot(std::mt19937_64 &rng);

private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// target <- tau * source + (1 - tau) * target over parameters and buffers.
void soft_update(Sequential &target, Sequential &source, double tau);

// Flat list of all parameter values followed by all buffers, in layer order.
std::vector<Tensor const *> state_tensors(Sequential &net);

}  // namespace npst3::nn
