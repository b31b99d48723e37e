#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "npst3/autoencoder.hpp"
#include "npst3/config.hpp"
#include "npst3/motion.hpp"
#include "npst3/nn/tensor.hpp"

namespace npst3::testing {

inline double relative_error(std::vector<double> const &a, std::vector<double> const &b)
{
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double const denom = std::max(std::sqrt(na), std::sqrt(nb));
  return denom == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

// Central differences of f at x over every coordinate.
inline std::vector<double> numeric_gradient(std::function<double()> const &f, std::vector<double *> const &x,
                                            double h = 1e-5)
{
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    double const saved = *x[i];
    *x[i]              = saved + h;
    double const up    = f();
    *x[i]              = saved - h;
    double const down  = f();
    *x[i]              = saved;
    g[i]               = (up - down) / (2.0 * h);
  }
  return g;
}

inline nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64 &rng, double scale = 1.0)
{
  nn::Tensor                             t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double &v : t.values())
  {
    v = u(rng);
  }
  return t;
}

inline MotionTrajectory random_trajectory(std::mt19937_64 &rng, std::size_t filled = kHorizon, double step = 10.0)
{
  std::normal_distribution<double> n(0.0, step);
  MotionTrajectory                 t;
  Point3                           p(n(rng) * 5, n(rng) * 5, n(rng) * 5);
  for (std::size_t k = 0; k < filled; ++k)
  {
    t.push_back(p);
    p += Point3(n(rng), n(rng), n(rng));
  }
  return t;
}

// Active ReLU units and pooling winners of one encoder pass.
inline std::vector<long> activation_pattern(Autoencoder const &model, RowMatrix const &x)
{
  EncoderTrace const tr = model.encode_traced(x);
  std::vector<long>  p(tr.argmax.begin(), tr.argmax.end());
  for (Eigen::Index i = 0; i < tr.pre.size(); ++i)
  {
    p.push_back(tr.pre.data()[i] > 0.0);
  }
  return p;
}

// True when no +-h move of a single coordinate changes the encoder's
// piecewise-linear region, i.e. central differences are meaningful at x.
inline bool smooth_at(Autoencoder const &model, RowMatrix x, double h = 1e-5)
{
  auto const base = activation_pattern(model, x);
  for (Eigen::Index i = 0; i < x.size(); ++i)
  {
    double const saved = x.data()[i];
    for (double d : {h, -h})
    {
      x.data()[i] = saved + d;
      if (activation_pattern(model, x) != base)
      {
        return false;
      }
    }
    x.data()[i] = saved;
  }
  return true;
}

// Small config so unit tests stay fast; widths only, every constant of the
// objective is untouched.
inline StyleTransferConfig small_config()
{
  StyleTransferConfig cfg = desk_scale_config();
  cfg.autoencoder.channels = 16;
  cfg.td3.widths.conv_channels = {4, 3, 2};
  cfg.td3.widths.actor_dense   = {12, 10, 8, 6};
  cfg.td3.widths.critic_state  = 10;
  cfg.td3.widths.critic_action = 6;
  cfg.td3.widths.critic_dense  = {12, 8, 6};
  return cfg;
}

// Autoencoder trained briefly on linear contents; cached per process.
inline Autoencoder const &small_autoencoder()
{
  static Autoencoder const model = [] {
    StyleTransferConfig cfg    = small_config();
    cfg.autoencoder.epochs     = 20;
    cfg.autoencoder.batch_size = 16;
    std::vector<NormalizedTrajectory> corpus;
    for (std::uint64_t i = 0; i < 32; ++i)
    {
      corpus.push_back(normalize(gen_linear_content(100 + i, cfg), cfg));
    }
    return train_autoencoder(corpus, cfg, 5).model;
  }();
  return model;
}

}  // namespace npst3::testing
