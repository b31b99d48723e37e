#include "npst3/nn/sequential.hpp"

#include <variant>

#include "npst3/errors.hpp"

namespace npst3::nn {

Sequential::Sequential(std::vector<LayerSpec> const &specs, std::uint64_t seed)
{
  for (std::size_t i = 0; i < specs.size(); ++i)
  {
    layers_.push_back(make_layer(specs[i], seed + i));
  }
}

Sequential::Sequential(Sequential const &other)
{
  for (auto const &l : other.layers_)
  {
    layers_.push_back(l->clone());
  }
}

Sequential &Sequential::operator=(Sequential const &other)
{
  if (this != &other)
  {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Sequential::add(std::unique_ptr<Layer> layer)
{
  layers_.push_back(std::move(layer));
}

Tensor Sequential::forward(Tensor const &input, Mode mode)
{
  Tensor x = input;
  for (auto &l : layers_)
  {
    x = l->forward(x, mode);
  }
  return x;
}

Tensor Sequential::backward(Tensor const &grad_output)
{
  Tensor g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
  {
    g = (*it)->backward(g);
  }
  return g;
}

std::vector<Param *> Sequential::parameters()
{
  std::vector<Param *> out;
  for (auto &l : layers_)
  {
    for (auto *p : l->parameters())
    {
      out.push_back(p);
    }
  }
  return out;
}

std::vector<Tensor *> Sequential::buffers()
{
  std::vector<Tensor *> out;
  for (auto &l : layers_)
  {
    for (auto *b : l->buffers())
    {
      out.push_back(b);
    }
  }
  return out;
}

std::vector<LayerSpec> Sequential::specs() const
{
  std::vector<LayerSpec> out;
  for (auto const &l : layers_)
  {
    out.push_back(l->spec());
  }
  return out;
}

void Sequential::zero_grad()
{
  for (auto *p : parameters())
  {
    p->grad.fill(0.0);
  }
}

namespace {

bool is_weighted(LayerSpec const &s)
{
  return std::holds_alternative<Conv1DSpec>(s) || std::holds_alternative<TransposedConv1DSpec>(s) ||
         std::holds_alternative<DenseSpec>(s);
}

}  // namespace

void Sequential::init_uniform(double range, std::mt19937_64 &rng)
{
  for (auto &l : layers_)
  {
    if (!is_weighted(l->spec()))
    {
      continue;
    }
    for (auto *p : l->parameters())
    {
      fill_uniform(p->value, range, rng);
    }
  }
}

void Sequential::init_glorot(std::mt19937_64 &rng)
{
  for (auto &l : layers_)
  {
    LayerSpec const spec = l->spec();
    std::size_t     fan_in = 0, fan_out = 0;
    if (auto const *c = std::get_if<Conv1DSpec>(&spec))
    {
      fan_in  = c->kernel * c->in_channels;
      fan_out = c->kernel * c->out_channels;
    }
    else if (auto const *t = std::get_if<TransposedConv1DSpec>(&spec))
    {
      fan_in  = t->kernel * t->in_channels;
      fan_out = t->kernel * t->out_channels;
    }
    else if (auto const *d = std::get_if<DenseSpec>(&spec))
    {
      fan_in  = d->in;
      fan_out = d->out;
    }
    else
    {
      continue;
    }
    auto params = l->parameters();
    fill_uniform(params.at(0)->value, glorot_limit(fan_in, fan_out), rng);
    params.at(1)->value.fill(0.0);
  }
}

void soft_update(Sequential &target, Sequential &source, double tau)
{
  auto tp = target.parameters();
  auto sp = source.parameters();
  auto tb = target.buffers();
  auto sb = source.buffers();
  if (tp.size() != sp.size() || tb.size() != sb.size())
  {
    throw ShapeError("soft_update: networks have different structure");
  }
  auto blend = [tau](Tensor &t, Tensor const &s) {
    if (t.shape() != s.shape())
    {
      throw ShapeError("soft_update: tensor shapes differ");
    }
    for (std::size_t i = 0; i < t.size(); ++i)
    {
      t[i] = tau * s[i] + (1.0 - tau) * t[i];
    }
  };
  for (std::size_t i = 0; i < tp.size(); ++i)
  {
    blend(tp[i]->value, sp[i]->value);
  }
  for (std::size_t i = 0; i < tb.size(); ++i)
  {
    blend(*tb[i], *sb[i]);
  }
}

std::vector<Tensor const *> state_tensors(Sequential &net)
{
  std::vector<Tensor const *> out;
  for (auto *p : net.parameters())
  {
    out.push_back(&p->value);
  }
  for (auto *b : net.buffers())
  {
    out.push_back(b);
  }
  return out;
}

}  // namespace npst3::nn
