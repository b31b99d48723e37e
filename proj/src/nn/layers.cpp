#include "npst3/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "npst3/errors.hpp"

namespace npst3::nn {

namespace {

using RowMat    = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap    = Eigen::Map<RowMat>;
using ConstMap  = Eigen::Map<RowMat const>;
using RowVecMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstRowVecMap = Eigen::Map<Eigen::RowVectorXd const>;

// [B, T, C] view of a rank-2 ([T, C]) or rank-3 tensor.
struct SeqDims
{
  std::size_t batch    = 0;
  std::size_t time     = 0;
  std::size_t channels = 0;
  bool        unbatched = false;

  Shape shape_with(std::size_t t, std::size_t c) const
  {
    return unbatched ? Shape{t, c} : Shape{batch, t, c};
  }
};

SeqDims seq_dims(Tensor const &x, char const *layer, std::size_t expected_channels)
{
  SeqDims d;
  if (x.rank() == 3)
  {
    d = {x.dim(0), x.dim(1), x.dim(2), false};
  }
  else if (x.rank() == 2)
  {
    d = {1, x.dim(0), x.dim(1), true};
  }
  else
  {
    throw ShapeError(std::string(layer) + ": expected [T, C] or [B, T, C] input, got " + shape_string(x.shape()));
  }
  if (expected_channels != 0 && d.channels != expected_channels)
  {
    throw ShapeError(std::string(layer) + ": expected " + std::to_string(expected_channels) +
                     " channels, got shape " + shape_string(x.shape()));
  }
  return d;
}

// Row (b, t) holds x[b, t + k - pad, :] for k = 0..K-1, zero outside [0, T).
RowMat im2col(double const *x, SeqDims const &d, std::size_t kernel)
{
  std::size_t const pad = kernel / 2;
  RowMat            cols = RowMat::Zero(static_cast<Eigen::Index>(d.batch * d.time),
                                        static_cast<Eigen::Index>(kernel * d.channels));
  for (std::size_t b = 0; b < d.batch; ++b)
  {
    for (std::size_t t = 0; t < d.time; ++t)
    {
      double *row = cols.data() + (b * d.time + t) * kernel * d.channels;
      for (std::size_t k = 0; k < kernel; ++k)
      {
        std::ptrdiff_t const src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(d.time))
        {
          continue;
        }
        std::copy_n(x + (b * d.time + static_cast<std::size_t>(src)) * d.channels, d.channels, row + k * d.channels);
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatters rows back onto [B, T, C], accumulating.
void col2im(RowMat const &cols, SeqDims const &d, std::size_t kernel, double *x)
{
  std::size_t const pad = kernel / 2;
  for (std::size_t b = 0; b < d.batch; ++b)
  {
    for (std::size_t t = 0; t < d.time; ++t)
    {
      double const *row = cols.data() + (b * d.time + t) * kernel * d.channels;
      for (std::size_t k = 0; k < kernel; ++k)
      {
        std::ptrdiff_t const dst = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
        if (dst < 0 || dst >= static_cast<std::ptrdiff_t>(d.time))
        {
          continue;
        }
        double       *out = x + (b * d.time + static_cast<std::size_t>(dst)) * d.channels;
        double const *in  = row + k * d.channels;
        for (std::size_t c = 0; c < d.channels; ++c)
        {
          out[c] += in[c];
        }
      }
    }
  }
}

void require_forward(bool seen, char const *layer)
{
  if (!seen)
  {
    throw StateError(std::string(layer) + ": backward called before forward");
  }
}

class Conv1D final : public Layer
{
public:
  explicit Conv1D(Conv1DSpec spec)
    : spec_(spec)
  {
    if (spec.kernel % 2 == 0 || spec.in_channels == 0 || spec.out_channels == 0)
    {
      throw ShapeError("Conv1D needs an odd kernel and non-zero channel counts");
    }
    weight_ = {"kernel", Tensor({spec.kernel, spec.in_channels, spec.out_channels}),
               Tensor({spec.kernel, spec.in_channels, spec.out_channels})};
    bias_   = {"bias", Tensor({spec.out_channels}), Tensor({spec.out_channels})};
  }

  LayerSpec spec() const override
  {
    return spec_;
  }

  Tensor forward(Tensor const &input, Mode) override
  {
    dims_ = seq_dims(input, "Conv1D", spec_.in_channels);
    cols_ = im2col(input.data(), dims_, spec_.kernel);
    Tensor   out(dims_.shape_with(dims_.time, spec_.out_channels));
    MatMap   y(out.data(), static_cast<Eigen::Index>(dims_.batch * dims_.time),
               static_cast<Eigen::Index>(spec_.out_channels));
    ConstMap w(weight_.value.data(), static_cast<Eigen::Index>(spec_.kernel * spec_.in_channels),
               static_cast<Eigen::Index>(spec_.out_channels));
    y.noalias() = cols_ * w;
    y.rowwise() += ConstRowVecMap(bias_.value.data(), static_cast<Eigen::Index>(spec_.out_channels));
    seen_ = true;
    return out;
  }

  Tensor backward(Tensor const &grad_output) override
  {
    require_forward(seen_, "Conv1D");
    require_shape(grad_output, dims_.shape_with(dims_.time, spec_.out_channels), "Conv1D backward");
    auto const rows = static_cast<Eigen::Index>(dims_.batch * dims_.time);
    auto const kc   = static_cast<Eigen::Index>(spec_.kernel * spec_.in_channels);
    auto const co   = static_cast<Eigen::Index>(spec_.out_channels);
    ConstMap   dy(grad_output.data(), rows, co);
    MatMap     dw(weight_.grad.data(), kc, co);
    ConstMap   w(weight_.value.data(), kc, co);
    dw.noalias() += cols_.transpose() * dy;
    RowVecMap(bias_.grad.data(), co) += dy.colwise().sum();
    RowMat dcols = dy * w.transpose();
    Tensor dx(dims_.shape_with(dims_.time, spec_.in_channels));
    col2im(dcols, dims_, spec_.kernel, dx.data());
    return dx;
  }

  std::vector<Param *> parameters() override
  {
    return {&weight_, &bias_};
  }

  std::unique_ptr<Layer> clone() const override
  {
    return std::make_unique<Conv1D>(*this);
  }

private:
  Conv1DSpec spec_;
  Param      weight_;
  Param      bias_;
  SeqDims    dims_;
  RowMat     cols_;
  bool       seen_ = false;
};

class TransposedConv1D final : public Layer
{
public:
  explicit TransposedConv1D(TransposedConv1DSpec spec)
    : spec_(spec)
  {
    if (spec.kernel % 2 == 0 || spec.in_channels == 0 || spec.out_channels == 0)
    {
      throw ShapeError("TransposedConv1D needs an odd kernel and non-zero channel counts");
    }
    // Stored as [Cin, K, Cout] so that it is a contiguous [Cin, K * Cout] matrix.
    weight_ = {"kernel", Tensor({spec.in_channels, spec.kernel, spec.out_channels}),
               Tensor({spec.in_channels, spec.kernel, spec.out_channels})};
    bias_   = {"bias", Tensor({spec.out_channels}), Tensor({spec.out_channels})};
  }

  LayerSpec spec() const override
  {
    return spec_;
  }

  Tensor forward(Tensor const &input, Mode) override
  {
    dims_  = seq_dims(input, "TransposedConv1D", spec_.in_channels);
    input_ = input;
    auto const rows = static_cast<Eigen::Index>(dims_.batch * dims_.time);
    auto const ci   = static_cast<Eigen::Index>(spec_.in_channels);
    auto const kco  = static_cast<Eigen::Index>(spec_.kernel * spec_.out_channels);
    ConstMap   x(input.data(), rows, ci);
    ConstMap   w(weight_.value.data(), ci, kco);
    RowMat     scattered = x * w;
    SeqDims    out_dims{dims_.batch, dims_.time, spec_.out_channels, dims_.unbatched};
    Tensor     out(dims_.shape_with(dims_.time, spec_.out_channels));
    col2im(scattered, out_dims, spec_.kernel, out.data());
    MatMap(out.data(), rows, static_cast<Eigen::Index>(spec_.out_channels)).rowwise() +=
        ConstRowVecMap(bias_.value.data(), static_cast<Eigen::Index>(spec_.out_channels));
    seen_ = true;
    return out;
  }

  Tensor backward(Tensor const &grad_output) override
  {
    require_forward(seen_, "TransposedConv1D");
    require_shape(grad_output, dims_.shape_with(dims_.time, spec_.out_channels), "TransposedConv1D backward");
    auto const rows = static_cast<Eigen::Index>(dims_.batch * dims_.time);
    auto const ci   = static_cast<Eigen::Index>(spec_.in_channels);
    auto const co   = static_cast<Eigen::Index>(spec_.out_channels);
    auto const kco  = static_cast<Eigen::Index>(spec_.kernel * spec_.out_channels);
    SeqDims    out_dims{dims_.batch, dims_.time, spec_.out_channels, dims_.unbatched};
    RowMat     dscattered = im2col(grad_output.data(), out_dims, spec_.kernel);
    ConstMap   x(input_.data(), rows, ci);
    ConstMap   w(weight_.value.data(), ci, kco);
    MatMap(weight_.grad.data(), ci, kco).noalias() += x.transpose() * dscattered;
    RowVecMap(bias_.grad.data(), co) += ConstMap(grad_output.data(), rows, co).colwise().sum();
    Tensor dx(input_.shape());
    MatMap(dx.data(), rows, ci).noalias() = dscattered * w.transpose();
    return dx;
  }

  std::vector<Param *> parameters() override
  {
    return {&weight_, &bias_};
  }

  std::unique_ptr<Layer> clone() const override
  {
    return std::make_unique<TransposedConv1D>(*this);
  }

private:
  TransposedConv1DSpec spec_;
  Param                weight_;
  Param                bias_;
  SeqDims              dims_;
  Tensor               input_;
  bool                 seen_ = false;
};

class MaxPool1D final : public Layer
{
public:
  explicit MaxPool1D(MaxPool1DSpec spec)
    : spec_(spec)
  {
    if (spec.width == 0 || spec.stride == 0)
    {
      throw ShapeError("MaxPool1D needs non-zero width and stride");
    }
  }

  LayerSpec spec() const override
  {
    return spec_;
  }

  Tensor forward(Tensor const &input, Mode) override
  {
    dims_ = seq_dims(input, "MaxPool1D", 0);
    if (dims_.time < spec_.width)
    {
      throw ShapeError("MaxPool1D: time length " + std::to_string(dims_.time) + " is shorter than the window " +
                       std::to_string(spec_.width));
    }
    out_time_ = (dims_.time - spec_.width) / spec_.stride + 1;
    Tensor out(dims_.shape_with(out_time_, dims_.channels));
    argmax_.assign(out.size(), 0);
    std::size_t const c = dims_.channels;
    for (std::size_t b = 0; b < dims_.batch; ++b)
    {
      for (std::size_t t = 0; t < out_time_; ++t)
      {
        for (std::size_t ch = 0; ch < c; ++ch)
        {
          std::size_t best_idx = (b * dims_.time + t * spec_.stride) * c + ch;
          for (std::size_t w = 1; w < spec_.width; ++w)
          {
            std::size_t const idx = (b * dims_.time + t * spec_.stride + w) * c + ch;
            if (input[idx] > input[best_idx])
            {
              best_idx = idx;
            }
          }
          std::size_t const o = (b * out_time_ + t) * c + ch;
          out[o]     = input[best_idx];
          argmax_[o] = best_idx;
        }
      }
    }
    seen_ = true;
    return out;
  }

  Tensor backward(Tensor const &grad_output) override
  {
    require_forward(seen_, "MaxPool1D");
    require_shape(grad_output, dims_.shape_with(out_time_, dims_.channels), "MaxPool1D backward");
    Tensor dx(dims_.shape_with(dims_.time, dims_.channels));
    for (std::size_t o = 0; o < grad_output.size(); ++o)
    {
      dx[argmax_[o]] += grad_output[o];
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override
  {
    return std::make_unique<MaxPool1D>(*this);
  }

private:
  MaxPool1DSpec            spec_;
  SeqDims                  dims_;
  std::size_t              out_time_ = 0;
  std::vector<std::size_t> argmax_;
  bool                     seen_ = false;
};

// Nearest-neighbour repetition along time.
class Upsample1D final : public Layer
{
public:
  explicit Upsample1D(Upsample1DSpec spec)
    : spec_(spec)
  {
    if (spec.factor == 0)
    {
      throw ShapeError("Upsample1D needs a non-zero factor");
    }
  }

  LayerSpec spec() const override
  {
    return spec_;
  }

  Tensor forward(Tensor const &input, Mode) override
  {
    dims_ = seq_dims(input, "Upsample1D", 0);
    std::size_t const c = dims_.channels;
    Tensor            out(dims_.shape_with(dims_.time * spec_.factor, c));
    for (std::size_t b = 0; b < dims_.batch; ++b)
    {
      for (std::size_t t = 0; t < dims_.time * spec_.factor; ++t)
      {
        std::copy_n(input.data() + (b * dims_.time + t / spec_.factor) * c, c,
                    out.data() + (b * dims_.time * spec_.factor + t) * c);
      }
    }
    seen_ = true;
    return out;
  }

  Tensor backward(Tensor const &grad_output) override
  {
    require_forward(seen_, "Upsample1D");
    std::size_t const c = dims_.channels;
    require_shape(grad_output, dims_.shape_with(dims_.time * spec_.factor, c), "Upsample1D backward");
    Tensor dx(dims_.shape_with(dims_.time, c));
    for (std::size_t b = 0; b < dims_.batch; ++b)
    {
      for (std::size_t t = 0; t < dims_.time * spec_.factor; ++t)
      {
        double const *src = grad_output.data() + (b * dims_.time * spec_.factor + t) * c;
        double       *dst = dx.data() + (b * dims_.time + t / spec_.factor) * c;
        for (std::size_t ch = 0; ch < c; ++ch)
        {
          dst[ch] += src[ch];
        }
      }
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override
  {
    return std::make_unique<Upsample1D>(*this);
  }

private:
  Upsample1DSpec spec_;
  SeqDims        dims_;
  bool           seen_ = false;
};

class Dense final : public Layer
{
public:
  explicit Dense(DenseSpec spec)
    : spec_(spec)
  {
    if (spec.in == 0 || spec.out == 0)
    {
      throw ShapeError("Dense needs non-zero sizes");
    }
    weight_ = {"kernel", Tensor({spec.in, spec.out}), Tensor({spec.in, spec.out})};
    bias_   = {"bias", Tensor({spec.out}), Tensor({spec.out})};
  }

  LayerSpec spec() const override
  {
    return spec_;
  }

  Tensor forward(Tensor const &input, Mode) override
  {
    if (input.rank() == 1 && input.dim(0) == spec_.in)
    {
      unbatched_ = true;
      batch_     = 1;
    }
    else if (input.rank() == 2 && input.dim(1) == spec_.in)
    {
      unbatched_ = false;
      batch_     = input.dim(0);
    }
    else
    {
      throw ShapeError("Dense: expected [" + std::to_string(spec_.in) + "] or [B, " + std::to_string(spec_.in) +
                       "] input, got " + shape_string(input.shape()));
    }
    input_ = input;
    Tensor out(unbatched_ ? Shape{spec_.out} : Shape{batch_, spec_.out});
    auto const b  = static_cast<Eigen::Index>(batch_);
    auto const in = static_cast<Eigen::Index>(spec_.in);
    auto const on = static_cast<Eigen::Index>(spec_.out);
    MatMap     y(out.data(), b, on);
    y.noalias() = ConstMap(input.data(), b, in) * ConstMap(weight_.value.data(), in, on);
    y.rowwise() += ConstRowVecMap(bias_.value.data(), on);
    seen_ = true;
    return out;
  }

  Tensor backward(Tensor const &grad_output) override
  {
    require_forward(seen_, "Dense");
    require_shape(grad_output, unbatched_ ? Shape{spec_.out} : Shape{batch_, spec_.out}, "Dense backward");
    auto const b  = static_cast<Eigen::Index>(batch_);
    auto const in = static_cast<Eigen::Index>(spec_.in);
    auto const on = static_cast<Eigen::Index>(spec_.out);
    ConstMap   dy(grad_output.data(), b, on);
    MatMap(weight_.grad.data(), in, on).noalias() += ConstMap(input_.data(), b, in).transpose() * dy;
    RowVecMap(bias_.grad.data(), on) += dy.colwise().sum();
    Tensor dx(input_.shape());
    MatMap(dx.data(), b, in).noalias() = dy * ConstMap(weight_.value.data(), in, on).transpose();
    return dx;
  }

  std::vector<Param *> parameters() override
  {
    return {&weight_, &bias_};
  }

  std::unique_ptr<Layer> clone() const override
  {
    return std::make_unique<Dense>(*this);
  }

private:
  DenseSpec   spec_;
  Param       weight_;
  Param       bias_;
  Tensor      input_;
  std::size_t batch_     = 0;
  bool        unbatched_ = false;
  bool        seen_      = false;
};

class BatchNorm final : public Layer
{
public:
  explicit BatchNorm(BatchNormSpec spec)
    : spec_(spec)
  {
    if (spec.features == 0)
    {
      throw ShapeError("BatchNorm needs a non-zero feature count");
    }
    gamma_        = {"gamma", Tensor({spec.features}, 1.0), Tensor({spec.features})};
    beta_         = {"beta", Tensor({spec.features}), Tensor({spec.features})};
    running_mean_ = Tensor({spec.features});
    running_var_  = Tensor({spec.features}, 1.0);
  }

  LayerSpec spec() const override
  {
    return spec_;
  }

  Tensor forward(Tensor const &input, Mode mode) override
  {
    std::size_t const f = spec_.features;
    if (input.rank() == 0 || input.shape().back() != f)
    {
      throw ShapeError("BatchNorm: expected last axis of size " + std::to_string(f) + ", got " +
                       shape_string(input.shape()));
    }
    rows_ = input.size() / f;
    mode_ = mode;
    std::vector<double> mean(f, 0.0);
    std::vector<double> var(f, 0.0);
    if (mode == Mode::Train)
    {
      for (std::size_t r = 0; r < rows_; ++r)
      {
        for (std::size_t j = 0; j < f; ++j)
        {
          mean[j] += input[r * f + j];
        }
      }
      for (auto &m : mean)
      {
        m /= static_cast<double>(rows_);
      }
      for (std::size_t r = 0; r < rows_; ++r)
      {
        for (std::size_t j = 0; j < f; ++j)
        {
          double const d = input[r * f + j] - mean[j];
          var[j] += d * d;
        }
      }
      for (std::size_t j = 0; j < f; ++j)
      {
        var[j] /= static_cast<double>(rows_);
        running_mean_[j] = spec_.momentum * running_mean_[j] + (1.0 - spec_.momentum) * mean[j];
        running_var_[j]  = spec_.momentum * running_var_[j] + (1.0 - spec_.momentum) * var[j];
      }
    }
    else
    {
      for (std::size_t j = 0; j < f; ++j)
      {
        mean[j] = running_mean_[j];
        var[j]  = running_var_[j];
      }
    }
    inv_std_.assign(f, 0.0);
    for (std::size_t j = 0; j < f; ++j)
    {
      inv_std_[j] = 1.0 / std::sqrt(var[j] + spec_.epsilon);
    }
    normalized_ = Tensor(input.shape());
    Tensor out(input.shape());
    for (std::size_t r = 0; r < rows_; ++r)
    {
      for (std::size_t j = 0; j < f; ++j)
      {
        double const xhat         = (input[r * f + j] - mean[j]) * inv_std_[j];
        normalized_[r * f + j]    = xhat;
        out[r * f + j]            = gamma_.value[j] * xhat + beta_.value[j];
      }
    }
    seen_ = true;
    return out;
  }

  Tensor backward(Tensor const &grad_output) override
  {
    require_forward(seen_, "BatchNorm");
    require_shape(grad_output, normalized_.shape(), "BatchNorm backward");
    std::size_t const   f = spec_.features;
    std::vector<double> sum_dy(f, 0.0);
    std::vector<double> sum_dy_xhat(f, 0.0);
    for (std::size_t r = 0; r < rows_; ++r)
    {
      for (std::size_t j = 0; j < f; ++j)
      {
        double const dy = grad_output[r * f + j];
        sum_dy[j] += dy;
        sum_dy_xhat[j] += dy * normalized_[r * f + j];
      }
    }
    for (std::size_t j = 0; j < f; ++j)
    {
      gamma_.grad[j] += sum_dy_xhat[j];
      beta_.grad[j] += sum_dy[j];
    }
    Tensor dx(grad_output.shape());
    if (mode_ == Mode::Train)
    {
      double const n = static_cast<double>(rows_);
      for (std::size_t r = 0; r < rows_; ++r)
      {
        for (std::size_t j = 0; j < f; ++j)
        {
          double const dy = grad_output[r * f + j];
          dx[r * f + j]   = gamma_.value[j] * inv_std_[j] *
                          (dy - sum_dy[j] / n - normalized_[r * f + j] * sum_dy_xhat[j] / n);
        }
      }
    }
    else
    {
      for (std::size_t r = 0; r < rows_; ++r)
      {
        for (std::size_t j = 0; j < f; ++j)
        {
          dx[r * f + j] = gamma_.value[j] * inv_std_[j] * grad_output[r * f + j];
        }
      }
    }
    return dx;
  }

  std::vector<Param *> parameters() override
  {
    return {&gamma_, &beta_};
  }

  std::vector<Tensor *> buffers() override
  {
    return {&running_mean_, &running_var_};
  }

  std::unique_ptr<Layer> clone() const override
  {
    return std::make_unique<BatchNorm>(*this);
  }

private:
  BatchNormSpec       spec_;
  Param               gamma_;
  Param               beta_;
  Tensor              running_mean_;
  Tensor              running_var_;
  Tensor              normalized_;
  std::vector<double> inv_std_;
  std::size_t         rows_ = 0;
  Mode                mode_ = Mode::Eval;
  bool                seen_ = false;
};

// Inverted dropout: kept units are scaled by 1 / (1 - rate) in training.
class Dropout final : public Layer
{
public:
  Dropout(DropoutSpec spec, std::uint64_t seed)
    : spec_(spec)
    , rng_(seed)
  {
    if (spec.rate < 0.0 || spec.rate >= 1.0)
    {
      throw ShapeError("Dropout rate must be in [0, 1)");
    }
  }

  LayerSpec spec() const override
  {
    return spec_;
  }

  void reseed(std::uint64_t seed)
  {
    rng_.seed(seed);
  }

  Tensor forward(Tensor const &input, Mode mode) override
  {
    mask_ = Tensor(input.shape(), 1.0);
    if (mode == Mode::Train && spec_.rate > 0.0)
    {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      double const                           keep = 1.0 / (1.0 - spec_.rate);
      for (std::size_t i = 0; i < mask_.size(); ++i)
      {
        mask_[i] = unit(rng_) >= spec_.rate ? keep : 0.0;
      }
    }
    Tensor out(input.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
    {
      out[i] = input[i] * mask_[i];
    }
    seen_ = true;
    return out;
  }

  Tensor backward(Tensor const &grad_output) override
  {
    require_forward(seen_, "Dropout");
    require_shape(grad_output, mask_.shape(), "Dropout backward");
    Tensor dx(grad_output.shape());
    for (std::size_t i = 0; i < dx.size(); ++i)
    {
      dx[i] = grad_output[i] * mask_[i];
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override
  {
    return std::make_unique<Dropout>(*this);
  }

private:
  DropoutSpec     spec_;
  std::mt19937_64 rng_;
  Tensor          mask_;
  bool            seen_ = false;
};

class ActivationLayer final : public Layer
{
public:
  explicit ActivationLayer(ActivationSpec spec)
    : spec_(spec)
  {}

  LayerSpec spec() const override
  {
    return spec_;
  }

  Tensor forward(Tensor const &input, Mode) override
  {
    Tensor out(input.shape());
    switch (spec_.kind)
    {
    case Activation::ReLU:
      for (std::size_t i = 0; i < out.size(); ++i)
      {
        out[i] = input[i] > 0.0 ? input[i] : 0.0;
      }
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < out.size(); ++i)
      {
        out[i] = std::tanh(input[i]);
      }
      break;
    case Activation::Linear:
      out = input;
      break;
    }
    // ReLU backward needs the input sign, tanh needs the output.
    cache_ = spec_.kind == Activation::Tanh ? out : input;
    seen_  = true;
    return out;
  }

  Tensor backward(Tensor const &grad_output) override
  {
    require_forward(seen_, "Activation");
    require_shape(grad_output, cache_.shape(), "Activation backward");
    Tensor dx(grad_output.shape());
    switch (spec_.kind)
    {
    case Activation::ReLU:
      for (std::size_t i = 0; i < dx.size(); ++i)
      {
        dx[i] = cache_[i] > 0.0 ? grad_output[i] : 0.0;
      }
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < dx.size(); ++i)
      {
        dx[i] = grad_output[i] * (1.0 - cache_[i] * cache_[i]);
      }
      break;
    case Activation::Linear:
      dx = grad_output;
      break;
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override
  {
    return std::make_unique<ActivationLayer>(*this);
  }

private:
  ActivationSpec spec_;
  Tensor         cache_;
  bool           seen_ = false;
};

std::string activation_name(Activation a)
{
  switch (a)
  {
  case Activation::ReLU:
    return "relu";
  case Activation::Tanh:
    return "tanh";
  case Activation::Linear:
    return "linear";
  }
  return "linear";
}

Activation parse_activation(std::string const &s)
{
  if (s == "relu")
  {
    return Activation::ReLU;
  }
  if (s == "tanh")
  {
    return Activation::Tanh;
  }
  if (s == "linear")
  {
    return Activation::Linear;
  }
  throw LoadError("unknown activation '" + s + "'");
}

template <class... Ts>
struct Overloaded : Ts...
{
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

nlohmann::json layer_spec_to_json(LayerSpec const &spec)
{
  using nlohmann::json;
  return std::visit(
      Overloaded{
          [](Conv1DSpec const &s) {
            return json{{"type", "conv1d"}, {"in", s.in_channels}, {"out", s.out_channels}, {"kernel", s.kernel},
                        {"padding", "same"}};
          },
          [](MaxPool1DSpec const &s) { return json{{"type", "maxpool1d"}, {"width", s.width}, {"stride", s.stride}}; },
          [](Upsample1DSpec const &s) { return json{{"type", "upsample1d"}, {"factor", s.factor}}; },
          [](TransposedConv1DSpec const &s) {
            return json{{"type", "transposed_conv1d"}, {"in", s.in_channels}, {"out", s.out_channels},
                        {"kernel", s.kernel}};
          },
          [](DenseSpec const &s) { return json{{"type", "dense"}, {"in", s.in}, {"out", s.out}}; },
          [](BatchNormSpec const &s) {
            return json{{"type", "batchnorm"}, {"features", s.features}, {"momentum", s.momentum},
                        {"epsilon", s.epsilon}};
          },
          [](DropoutSpec const &s) { return json{{"type", "dropout"}, {"rate", s.rate}}; },
          [](ActivationSpec const &s) { return json{{"type", "activation"}, {"kind", activation_name(s.kind)}}; },
      },
      spec);
}

LayerSpec layer_spec_from_json(nlohmann::json const &j)
{
  try
  {
    std::string const type = j.at("type").get<std::string>();
    if (type == "conv1d")
    {
      if (j.at("padding").get<std::string>() != "same")
      {
        throw LoadError("unsupported conv1d padding");
      }
      return Conv1DSpec{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>(),
                        j.at("kernel").get<std::size_t>(), Padding::Same};
    }
    if (type == "maxpool1d")
    {
      return MaxPool1DSpec{j.at("width").get<std::size_t>(), j.at("stride").get<std::size_t>()};
    }
    if (type == "upsample1d")
    {
      return Upsample1DSpec{j.at("factor").get<std::size_t>()};
    }
    if (type == "transposed_conv1d")
    {
      return TransposedConv1DSpec{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>(),
                                  j.at("kernel").get<std::size_t>()};
    }
    if (type == "dense")
    {
      return DenseSpec{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>()};
    }
    if (type == "batchnorm")
    {
      return BatchNormSpec{j.at("features").get<std::size_t>(), j.at("momentum").get<double>(),
                           j.at("epsilon").get<double>()};
    }
    if (type == "dropout")
    {
      return DropoutSpec{j.at("rate").get<double>()};
    }
    if (type == "activation")
    {
      return ActivationSpec{parse_activation(j.at("kind").get<std::string>())};
    }
    throw LoadError("unknown layer type '" + type + "'");
  }
  catch (nlohmann::json::exception const &e)
  {
    throw LoadError(std::string("malformed layer spec: ") + e.what());
  }
}

std::string layer_name(LayerSpec const &spec)
{
  return layer_spec_to_json(spec).at("type").get<std::string>();
}

std::unique_ptr<Layer> make_layer(LayerSpec const &spec, std::uint64_t seed)
{
  return std::visit(Overloaded{
                        [](Conv1DSpec const &s) -> std::unique_ptr<Layer> { return std::make_unique<Conv1D>(s); },
                        [](MaxPool1DSpec const &s) -> std::unique_ptr<Layer> { return std::make_unique<MaxPool1D>(s); },
                        [](Upsample1DSpec const &s) -> std::unique_ptr<Layer> {
                          return std::make_unique<Upsample1D>(s);
                        },
                        [](TransposedConv1DSpec const &s) -> std::unique_ptr<Layer> {
                          return std::make_unique<TransposedConv1D>(s);
                        },
                        [](DenseSpec const &s) -> std::unique_ptr<Layer> { return std::make_unique<Dense>(s); },
                        [](BatchNormSpec const &s) -> std::unique_ptr<Layer> { return std::make_unique<BatchNorm>(s); },
                        [seed](DropoutSpec const &s) -> std::unique_ptr<Layer> {
                          return std::make_unique<Dropout>(s, seed);
                        },
                        [](ActivationSpec const &s) -> std::unique_ptr<Layer> {
                          return std::make_unique<ActivationLayer>(s);
                        },
                    },
                    spec);
}

void reseed_dropout(Layer &layer, std::uint64_t seed)
{
  if (auto *d = dynamic_cast<Dropout *>(&layer))
  {
    d->reseed(seed);
  }
}

Tensor forward(Layer &layer, Tensor const &input, Mode mode)
{
  return layer.forward(input, mode);
}

void fill_uniform(Tensor &t, double range, std::mt19937_64 &rng)
{
  if (!(range > 0.0))
  {
    throw ConfigError("uniform init range must be > 0");
  }
  std::uniform_real_distribution<double> dist(-range, range);
  for (auto &v : t.values())
  {
    v = dist(rng);
  }
}

Tensor init_uniform(Shape const &shape, double range, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  Tensor          t(shape);
  fill_uniform(t, range, rng);
  return t;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out)
{
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace npst3::nn
