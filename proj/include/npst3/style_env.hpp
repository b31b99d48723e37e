#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "npst3/autoencoder.hpp"
#include "npst3/config.hpp"
#include "npst3/motion.hpp"
#include "npst3/reward.hpp"

namespace npst3 {

// Episode state. `generated` holds exactly t samples; `content` holds at
// least t + 1 once the next step is to be taken.
struct EnvState
{
  MotionTrajectory content;
  MotionTrajectory generated;
  std::size_t      t = 0;

  bool done() const
  {
    return t >= kHorizon;
  }
};

// What the actor and critics see: content through t and generated through
// t - 1, both centered on the content's first sample, scaled by 1/RT and
// zero-padded to [50, 3].
struct Observation
{
  TrajectoryMatrix content   = TrajectoryMatrix::Zero();
  TrajectoryMatrix generated = TrajectoryMatrix::Zero();
  std::size_t      t         = 0;  // generated samples so far
};

struct StepResult
{
  EnvState      state;
  double        reward = 0.0;
  bool          done   = false;
  LossBreakdown breakdown;
  Point3        applied = Point3::Zero();  // displacement actually added, mm
};

Point3 clip_action(Point3 const &a, double ar_mm);

class StyleEnv
{
public:
  StyleEnv(Autoencoder const &model, MotionTrajectory const &style, StyleTransferConfig const &cfg);

  EnvState   reset(MotionTrajectory const &content) const;
  // The first step places G[0] at C[0] and ignores the action; later steps
  // add the clipped action to the previous generated sample.
  StepResult step(EnvState const &state, Point3 const &action) const;

  Observation observe(EnvState const &state) const;

  StyleTransferConfig const &config() const
  {
    return cfg_;
  }
  StyleReference const &style() const
  {
    return style_;
  }
  Autoencoder const &model() const
  {
    return *model_;
  }

private:
  Autoencoder const  *model_;
  StyleTransferConfig cfg_;
  StyleReference      style_;
};

using PolicyFn = std::function<Point3(Observation const &)>;
// Additive action noise for step t, applied before clipping.
using NoiseFn = std::function<Point3(std::size_t t)>;

struct RolloutResult
{
  MotionTrajectory           generated;
  std::vector<LossBreakdown> breakdowns;
  std::vector<double>        rewards;
  double                     discounted_return = 0.0;
};

// reset + 50 steps. The policy is not queried for the first step.
RolloutResult rollout(PolicyFn const &policy, StyleEnv const &env, MotionTrajectory const &content,
                      NoiseFn const &noise = {});

// Mean Euclidean distance between G[k] and C[k] over the 50 samples, mm.
double mean_position_error(MotionTrajectory const &generated, MotionTrajectory const &content);

}  // namespace npst3
