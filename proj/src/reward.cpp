#include "npst3/reward.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>

#include "npst3/errors.hpp"

namespace npst3 {

namespace {

double mse3(Point3 const &v)
{
  return v.squaredNorm() / 3.0;
}

void require_filled(MotionTrajectory const &traj, std::size_t n, char const *what)
{
  if (traj.filled() < n)
  {
    throw StateError(std::string(what) + " needs " + std::to_string(n) + " filled samples, trajectory has " +
                     std::to_string(traj.filled()));
  }
}

void require_step(std::size_t t, char const *what)
{
  if (t < 1 || t > kHorizon)
  {
    throw StateError(std::string(what) + ": step " + std::to_string(t) + " outside [1, 50]");
  }
}

Point3 velocity_residual(MotionTrajectory const &g, MotionTrajectory const &s, std::size_t t, double rt)
{
  return ((g[t] - g[t - 1]) - (s[t] - s[t - 1])) / rt;
}

std::string fmt(double v)
{
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Gradient of w_c * content + w_s * style w.r.t. the normalized matrix of g.
RowMatrix weighted_st_gradient(Autoencoder const &model, NormalizedTrajectory const &c, StyleReference const &s,
                               NormalizedTrajectory const &g, double wc, double ws)
{
  FeatureMap const   fc = model.encode(c);
  EncoderTrace const tr = model.encode_traced(RowMatrix(g.matrix()));
  FeatureMap const  &fg = tr.features;
  auto const         t  = static_cast<double>(fg.rows());
  auto const         ch = static_cast<double>(fg.cols());
  FeatureMap         dfg = -2.0 * wc * (fc - fg) / static_cast<double>(fc.size());
  // d/dFg of ws * |Gs - Gg|^2 / C^2 with Gx = Fx^T Fx / T is
  // -4 ws / (C^2 T^2) * Fg (Fs^T Fs - Fg^T Fg).
  RowMatrix const fs_fg = fg * s.features.transpose();
  RowMatrix const fg_fg = fg * fg.transpose();
  dfg -= (4.0 * ws / (ch * ch * t * t)) * (fs_fg * s.features - fg_fg * fg);
  return model.encode_backward(tr, dfg);
}

}  // namespace

StyleReference::StyleReference(Autoencoder const &model, MotionTrajectory const &style, StyleTransferConfig const &cfg)
  : trajectory(style)
  , normalized(normalize(style, cfg))
  , features(model.encode(normalized))
  , self_inner((features * features.transpose()).squaredNorm())
{}

double style_mse(StyleReference const &s, FeatureMap const &fg)
{
  double const t     = static_cast<double>(fg.rows());
  double const ch    = static_cast<double>(fg.cols());
  double const cross = (s.features * fg.transpose()).squaredNorm();
  double const own   = (fg * fg.transpose()).squaredNorm();
  return std::max(0.0, (s.self_inner - 2.0 * cross + own) / (t * t * ch * ch));
}

double position_loss(MotionTrajectory const &g, MotionTrajectory const &c, std::size_t t,
                     StyleTransferConfig const &cfg)
{
  require_step(t, "position_loss");
  require_filled(g, t, "position_loss (generated)");
  require_filled(c, t, "position_loss (content)");
  return mse3((g[t - 1] - c[t - 1]) / cfg.rt_mm);
}

double endpoint_loss(MotionTrajectory const &g, MotionTrajectory const &c, std::size_t t,
                     StyleTransferConfig const &cfg)
{
  require_step(t, "endpoint_loss");
  if (t < kHorizon)
  {
    return 0.0;
  }
  require_filled(g, kHorizon, "endpoint_loss (generated)");
  require_filled(c, kHorizon, "endpoint_loss (content)");
  return mse3((g[kHorizon - 1] - c[kHorizon - 1]) / cfg.rt_mm);
}

double velocity_loss(MotionTrajectory const &g, MotionTrajectory const &s, std::size_t t,
                     StyleTransferConfig const &cfg)
{
  if (t == 0 || t >= kHorizon)
  {
    throw StateError("velocity_loss: step " + std::to_string(t) + " outside [1, 49]");
  }
  require_filled(g, t + 1, "velocity_loss (generated)");
  require_filled(s, t + 1, "velocity_loss (style)");
  return mse3(velocity_residual(g, s, t, cfg.rt_mm));
}

double velocity_loss_trajectory(MotionTrajectory const &g, MotionTrajectory const &s, std::size_t t,
                                StyleTransferConfig const &cfg)
{
  if (t == 0 || t >= kHorizon)
  {
    throw StateError("velocity_loss_trajectory: step " + std::to_string(t) + " outside [1, 49]");
  }
  double sum = 0.0;
  for (std::size_t k = 1; k <= t; ++k)
  {
    sum += velocity_loss(g, s, k, cfg);
  }
  return sum / static_cast<double>(t);
}

double reward_from_total(double total, StyleTransferConfig const &cfg)
{
  if (cfg.reward_mode == RewardMode::Inverse)
  {
    return 1.0 / (total + cfg.inverse_epsilon);
  }
  return 1.0 / (1.0 + total);
}

LossBreakdown total_loss(Autoencoder const &model, MotionTrajectory const &c, StyleReference const &s,
                         MotionTrajectory const &g, std::size_t t, StyleTransferConfig const &cfg)
{
  require_step(t, "total_loss");
  require_filled(g, t, "total_loss (generated)");
  require_filled(c, t, "total_loss (content)");
  NormalizedTrajectory const nc = normalize(c.prefix(t), cfg);
  NormalizedTrajectory const ng = normalize(g.prefix(t), cfg);
  FeatureMap const           fg = model.encode(ng);

  LossBreakdown b;
  b.l_content = mse(model.encode(nc), fg);
  b.l_style   = style_mse(s, fg);
  b.l_p       = position_loss(g, c, t, cfg);
  b.l_ep      = endpoint_loss(g, c, t, cfg);
  if (t >= 2)
  {
    b.l_v = cfg.velocity_mode == VelocityMode::PerStep ? velocity_loss(g, s.trajectory, t - 1, cfg)
                                                      : velocity_loss_trajectory(g, s.trajectory, t - 1, cfg);
  }
  LossWeights const &w = cfg.weights;
  b.total  = w.content * b.l_content + w.style * b.l_style + w.position * b.l_p + w.endpoint * b.l_ep +
            w.velocity * b.l_v;
  b.reward = reward_from_total(b.total, cfg);
  return b;
}

LossBreakdown total_loss(Autoencoder const &model, MotionTrajectory const &c, MotionTrajectory const &s,
                         MotionTrajectory const &g, std::size_t t, StyleTransferConfig const &cfg)
{
  return total_loss(model, c, StyleReference(model, s, cfg), g, t, cfg);
}

TrajectoryMatrix total_loss_gradient(Autoencoder const &model, MotionTrajectory const &c, StyleReference const &s,
                                     MotionTrajectory const &g, std::size_t t, StyleTransferConfig const &cfg)
{
  require_step(t, "total_loss_gradient");
  require_filled(g, t, "total_loss_gradient (generated)");
  require_filled(c, t, "total_loss_gradient (content)");
  double const       rt = cfg.rt_mm;
  LossWeights const &w  = cfg.weights;

  TrajectoryMatrix grad = TrajectoryMatrix::Zero();
  RowMatrix const  dn   = weighted_st_gradient(model, normalize(c.prefix(t), cfg), s, normalize(g.prefix(t), cfg),
                                            w.content, w.style);
  // n[k] = (g[k] - g[0]) / rt for k < t; padded rows are constants.
  for (std::size_t k = 0; k < t; ++k)
  {
    auto const row = static_cast<Eigen::Index>(k);
    grad.row(row) += dn.row(row) / rt;
    grad.row(0) -= dn.row(row) / rt;
  }

  auto add = [&grad](std::size_t k, Point3 const &v) { grad.row(static_cast<Eigen::Index>(k)) += v.transpose(); };
  double const coef = 2.0 / (3.0 * rt);
  add(t - 1, w.position * coef * (g[t - 1] - c[t - 1]) / rt);
  if (t == kHorizon)
  {
    add(kHorizon - 1, w.endpoint * coef * (g[kHorizon - 1] - c[kHorizon - 1]) / rt);
  }
  if (t >= 2)
  {
    std::size_t const last = t - 1;
    if (cfg.velocity_mode == VelocityMode::PerStep)
    {
      Point3 const u = velocity_residual(g, s.trajectory, last, rt);
      add(last, w.velocity * coef * u);
      add(last - 1, -w.velocity * coef * u);
    }
    else
    {
      double const scale = 1.0 / static_cast<double>(last);
      for (std::size_t k = 1; k <= last; ++k)
      {
        Point3 const u = velocity_residual(g, s.trajectory, k, rt);
        add(k, scale * w.velocity * coef * u);
        add(k - 1, -scale * w.velocity * coef * u);
      }
    }
  }
  return grad;
}

void write_breakdown_csv(std::ostream &out, std::span<LossBreakdown const> steps)
{
  out << "step,l_content,l_style,l_p,l_ep,l_v,total,reward\n";
  for (std::size_t i = 0; i < steps.size(); ++i)
  {
    auto const &b = steps[i];
    out << (i + 1) << ',' << fmt(b.l_content) << ',' << fmt(b.l_style) << ',' << fmt(b.l_p) << ',' << fmt(b.l_ep)
        << ',' << fmt(b.l_v) << ',' << fmt(b.total) << ',' << fmt(b.reward) << '\n';
  }
}

void write_breakdown_csv(std::string const &path, std::span<LossBreakdown const> steps)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw Error("cannot write '" + path + "'");
  }
  write_breakdown_csv(out, steps);
}

}  // namespace npst3
