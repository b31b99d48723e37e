#include "npst3/style_env.hpp"

#include <algorithm>
#include <cmath>

#include "npst3/errors.hpp"

namespace npst3 {

Point3 clip_action(Point3 const &a, double ar_mm)
{
  if (!a.allFinite())
  {
    throw NumericError("non-finite action");
  }
  return a.cwiseMax(-ar_mm).cwiseMin(ar_mm);
}

StyleEnv::StyleEnv(Autoencoder const &model, MotionTrajectory const &style, StyleTransferConfig const &cfg)
  : model_(&model)
  , cfg_(cfg)
  , style_(model, style, cfg)
{
  if (!style.full())
  {
    throw StateError("style demonstration must have 50 samples, got " + std::to_string(style.filled()));
  }
}

EnvState StyleEnv::reset(MotionTrajectory const &content) const
{
  if (content.filled() == 0)
  {
    throw EmptyTrajectoryError("cannot reset on an empty content trajectory");
  }
  EnvState s;
  s.content = content;
  return s;
}

StepResult StyleEnv::step(EnvState const &state, Point3 const &action) const
{
  if (state.done())
  {
    throw StateError("episode already finished after 50 steps");
  }
  if (state.generated.filled() != state.t)
  {
    throw StateError("generated trajectory out of sync with step counter");
  }
  if (state.content.filled() < state.t + 1)
  {
    throw StateError("content sample " + std::to_string(state.t) + " not yet available");
  }
  StepResult r;
  r.state = state;
  if (state.t == 0)
  {
    r.state.generated.push_back(state.content[0]);
  }
  else
  {
    r.applied = clip_action(action, cfg_.ar_mm());
    r.state.generated.push_back(state.generated[state.t - 1] + r.applied);
  }
  r.state.t += 1;
  r.breakdown = total_loss(*model_, r.state.content, style_, r.state.generated, r.state.t, cfg_);
  r.reward    = r.breakdown.reward;
  r.done      = r.state.done();
  return r;
}

Observation StyleEnv::observe(EnvState const &state) const
{
  if (state.content.filled() == 0)
  {
    throw EmptyTrajectoryError("cannot observe an empty content trajectory");
  }
  std::size_t const nc     = std::min(state.t + 1, kHorizon);
  Point3 const      origin = state.content[0];
  Observation       o;
  o.content   = normalize_about(state.content.prefix(nc), origin, cfg_.rt_mm).matrix();
  o.generated = normalize_about(state.generated.prefix(state.t), origin, cfg_.rt_mm).matrix();
  o.t         = state.t;
  return o;
}

RolloutResult rollout(PolicyFn const &policy, StyleEnv const &env, MotionTrajectory const &content,
                      NoiseFn const &noise)
{
  if (!content.full())
  {
    throw StateError("rollout needs a 50-sample content trajectory, got " + std::to_string(content.filled()));
  }
  RolloutResult out;
  EnvState      s        = env.reset(content);
  double        discount = 1.0;
  while (!s.done())
  {
    Point3 a = Point3::Zero();
    if (s.t > 0)
    {
      a = policy(env.observe(s));
      if (noise)
      {
        a += noise(s.t);
      }
    }
    StepResult r = env.step(s, a);
    out.breakdowns.push_back(r.breakdown);
    out.rewards.push_back(r.reward);
    out.discounted_return += discount * r.reward;
    discount *= env.config().td3.gamma;
    s = std::move(r.state);
  }
  out.generated = s.generated;
  return out;
}

double mean_position_error(MotionTrajectory const &generated, MotionTrajectory const &content)
{
  std::size_t const n = std::min(generated.filled(), content.filled());
  if (n == 0)
  {
    throw EmptyTrajectoryError("mean_position_error on empty trajectories");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k)
  {
    sum += (generated[k] - content[k]).norm();
  }
  return sum / static_cast<double>(n);
}

}  // namespace npst3
