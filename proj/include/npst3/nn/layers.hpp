#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "npst3/nn/tensor.hpp"

namespace npst3::nn {

enum class Mode
{
  Train,
  Eval,
};

enum class Activation
{
  ReLU,
  Tanh,
  Linear,
};

enum class Padding
{
  Same,
};

struct Conv1DSpec
{
  std::size_t in_channels  = 0;
  std::size_t out_channels = 0;
  std::size_t kernel       = 5;
  Padding     padding      = Padding::Same;
  bool operator==(Conv1DSpec const &) const = default;
};

struct MaxPool1DSpec
{
  std::size_t width  = 2;
  std::size_t stride = 2;
  bool operator==(MaxPool1DSpec const &) const = default;
};

struct Upsample1DSpec
{
  std::size_t factor = 2;
  bool operator==(Upsample1DSpec const &) const = default;
};

// Stride-1 transposed convolution with same-length output.
struct TransposedConv1DSpec
{
  std::size_t in_channels  = 0;
  std::size_t out_channels = 0;
  std::size_t kernel       = 5;
  bool operator==(TransposedConv1DSpec const &) const = default;
};

struct DenseSpec
{
  std::size_t in  = 0;
  std::size_t out = 0;
  bool operator==(DenseSpec const &) const = default;
};

// Normalizes the last axis; statistics are taken over every other axis.
struct BatchNormSpec
{
  std::size_t features = 0;
  double      momentum = 0.99;
  double      epsilon  = 1e-5;
  bool operator==(BatchNormSpec const &) const = default;
};

struct DropoutSpec
{
  double rate = 0.2;
  bool operator==(DropoutSpec const &) const = default;
};

struct ActivationSpec
{
  Activation kind = Activation::ReLU;
  bool operator==(ActivationSpec const &) const = default;
};

using LayerSpec = std::variant<Conv1DSpec, MaxPool1DSpec, Upsample1DSpec, TransposedConv1DSpec, DenseSpec,
                               BatchNormSpec, DropoutSpec, ActivationSpec>;

nlohmann::json layer_spec_to_json(LayerSpec const &spec);
LayerSpec      layer_spec_from_json(nlohmann::json const &j);
std::string    layer_name(LayerSpec const &spec);

struct Param
{
  std::string name;
  Tensor      value;
  Tensor      grad;
};

class Layer
{
public:
  virtual ~Layer() = default;

  virtual LayerSpec spec() const = 0;

  virtual Tensor forward(Tensor const &input, Mode mode) = 0;

  // Gradient w.r.t. the most recent forward input. Parameter gradients are
  // accumulated into Param::grad. Throws StateError without a prior forward.
  virtual Tensor backward(Tensor const &grad_output) = 0;

  virtual std::vector<Param *> parameters()
  {
    return {};
  }

  // Non-trainable state that still belongs to the model (running statistics).
  virtual std::vector<Tensor *> buffers()
  {
    return {};
  }

  virtual std::unique_ptr<Layer> clone() const = 0;
};

// Builds a layer with zero weights and biases (BatchNorm scale starts at 1).
// `seed` drives the dropout mask stream.
std::unique_ptr<Layer> make_layer(LayerSpec const &spec, std::uint64_t seed = 0);

// Reseeds the mask stream of a Dropout layer; no-op for other layers.
void reseed_dropout(Layer &layer, std::uint64_t seed);

// Single-layer convenience wrapper around Layer::forward.
Tensor forward(Layer &layer, Tensor const &input, Mode mode);

// Entries i.i.d. uniform in [-range, range].
Tensor init_uniform(Shape const &shape, double range, std::uint64_t seed);
void   fill_uniform(Tensor &t, double range, std::mt19937_64 &rng);

// Glorot/Xavier uniform limit for the given fan sizes.
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

}  // namespace npst3::nn
