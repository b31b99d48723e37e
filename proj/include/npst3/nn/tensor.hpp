#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace npst3::nn {

using Shape = std::vector<std::size_t>;

std::string shape_string(Shape const &shape);
std::size_t shape_size(Shape const &shape);

// Dense row-major array of doubles. Rank is at most 3 in this code base:
// [batch, time, channels] for sequence layers and [batch, features] for
// fully connected ones.
class Tensor
{
public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros_like(Tensor const &other)
  {
    return Tensor(other.shape_);
  }

  Shape const &shape() const
  {
    return shape_;
  }
  std::size_t rank() const
  {
    return shape_.size();
  }
  std::size_t dim(std::size_t i) const
  {
    return shape_.at(i);
  }
  std::size_t size() const
  {
    return values_.size();
  }

  double *data()
  {
    return values_.data();
  }
  double const *data() const
  {
    return values_.data();
  }
  std::span<double> values()
  {
    return values_;
  }
  std::span<double const> values() const
  {
    return values_;
  }

  double &operator[](std::size_t i)
  {
    return values_[i];
  }
  double operator[](std::size_t i) const
  {
    return values_[i];
  }

  // Same values, new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(double v);
  bool all_finite() const;

  bool operator==(Tensor const &other) const = default;

private:
  Shape               shape_;
  // Fixed alignment keeps vectorized reductions bitwise reproducible across
  // allocations.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
};

// Throws ShapeError naming `what` when shapes differ.
void require_shape(Tensor const &t, Shape const &expected, char const *what);

// Concatenates [B, n_i] tensors along the feature axis.
Tensor concat_features(std::span<Tensor const *const> parts);

// Inverse of concat_features for a gradient: splits [B, sum n_i] into parts.
std::vector<Tensor> split_features(Tensor const &t, std::span<std::size_t const> widths);

}  // namespace npst3::nn
