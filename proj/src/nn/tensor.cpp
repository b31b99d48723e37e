#include "npst3/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "npst3/errors.hpp"

namespace npst3::nn {

std::string shape_string(Shape const &shape)
{
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i)
  {
    s += (i ? ", " : "") + std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(Shape const &shape)
{
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
  : shape_(std::move(shape))
  , values_(shape_size(shape_), fill)
{}

Tensor::Tensor(Shape shape, std::vector<double> values)
  : shape_(std::move(shape))
  , values_(values.begin(), values.end())
{
  if (values_.size() != shape_size(shape_))
  {
    throw ShapeError("tensor of shape " + shape_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                     " values, got " + std::to_string(values_.size()));
  }
}

Tensor Tensor::reshaped(Shape shape) const
{
  if (shape_size(shape) != values_.size())
  {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double v)
{
  std::fill(values_.begin(), values_.end(), v);
}

bool Tensor::all_finite() const
{
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_shape(Tensor const &t, Shape const &expected, char const *what)
{
  if (t.shape() != expected)
  {
    throw ShapeError(std::string(what) + ": expected shape " + shape_string(expected) + ", got " +
                     shape_string(t.shape()));
  }
}

Tensor concat_features(std::span<Tensor const *const> parts)
{
  if (parts.empty())
  {
    return {};
  }
  std::size_t const batch = parts.front()->dim(0);
  std::size_t       total = 0;
  for (auto const *p : parts)
  {
    if (p->rank() != 2 || p->dim(0) != batch)
    {
      throw ShapeError("concat_features: expected [" + std::to_string(batch) + ", n] parts, got " +
                       shape_string(p->shape()));
    }
    total += p->dim(1);
  }
  Tensor out({batch, total});
  for (std::size_t b = 0; b < batch; ++b)
  {
    double *dst = out.data() + b * total;
    for (auto const *p : parts)
    {
      std::size_t const w = p->dim(1);
      std::copy_n(p->data() + b * w, w, dst);
      dst += w;
    }
  }
  return out;
}

std::vector<Tensor> split_features(Tensor const &t, std::span<std::size_t const> widths)
{
  std::size_t const total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  if (t.rank() != 2 || t.dim(1) != total)
  {
    throw ShapeError("split_features: expected [B, " + std::to_string(total) + "], got " + shape_string(t.shape()));
  }
  std::size_t const   batch = t.dim(0);
  std::vector<Tensor> out;
  for (auto w : widths)
  {
    out.emplace_back(Shape{batch, w});
  }
  for (std::size_t b = 0; b < batch; ++b)
  {
    double const *src = t.data() + b * total;
    for (std::size_t i = 0; i < widths.size(); ++i)
    {
      std::copy_n(src, widths[i], out[i].data() + b * widths[i]);
      src += widths[i];
    }
  }
  return out;
}

}  // namespace npst3::nn
