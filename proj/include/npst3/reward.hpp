#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include "npst3/autoencoder.hpp"
#include "npst3/config.hpp"
#include "npst3/motion.hpp"

namespace npst3 {

struct LossBreakdown
{
  double l_content = 0.0;
  double l_style   = 0.0;
  double l_p       = 0.0;
  double l_ep      = 0.0;
  double l_v       = 0.0;
  double total     = 0.0;
  double reward    = 1.0;

  bool operator==(LossBreakdown const &) const = default;
};

// Style demonstration with its encoder features precomputed.
struct StyleReference
{
  MotionTrajectory     trajectory;
  NormalizedTrajectory normalized;
  FeatureMap           features;
  double               self_inner = 0.0;  // |Fs Fs^T|^2

  StyleReference(Autoencoder const &model, MotionTrajectory const &style, StyleTransferConfig const &cfg);
};

// Position error of sample t-1, normalized by RT, as a 3-component MSE.
double position_loss(MotionTrajectory const &g, MotionTrajectory const &c, std::size_t t,
                     StyleTransferConfig const &cfg);

// Same measure on the final sample once t reaches the horizon; 0 before.
double endpoint_loss(MotionTrajectory const &g, MotionTrajectory const &c, std::size_t t,
                     StyleTransferConfig const &cfg);

// Mismatch between the displacements G[t] - G[t-1] and S[t] - S[t-1].
double velocity_loss(MotionTrajectory const &g, MotionTrajectory const &s, std::size_t t,
                     StyleTransferConfig const &cfg);

// Mean of velocity_loss over steps 1..t.
double velocity_loss_trajectory(MotionTrajectory const &g, MotionTrajectory const &s, std::size_t t,
                                StyleTransferConfig const &cfg);

double reward_from_total(double total, StyleTransferConfig const &cfg);

// All loss terms after execution step t (1..50), i.e. with t samples of G
// generated. C and G are truncated to their first t samples and zero-padded;
// the velocity term looks at the latest displacement G[t-1] - G[t-2].
LossBreakdown total_loss(Autoencoder const &model, MotionTrajectory const &c, StyleReference const &s,
                         MotionTrajectory const &g, std::size_t t, StyleTransferConfig const &cfg);
LossBreakdown total_loss(Autoencoder const &model, MotionTrajectory const &c, MotionTrajectory const &s,
                         MotionTrajectory const &g, std::size_t t, StyleTransferConfig const &cfg);

// d total / d G[k] in 1/mm for k < t; zero rows beyond.
TrajectoryMatrix total_loss_gradient(Autoencoder const &model, MotionTrajectory const &c, StyleReference const &s,
                                     MotionTrajectory const &g, std::size_t t, StyleTransferConfig const &cfg);

// Header `step,l_content,l_style,l_p,l_ep,l_v,total,reward`, steps from 1.
// Same value as mse(gram(fs), gram(fg)), computed through the [T, T] products
// Fs Fg^T instead of the [C, C] Gram matrices.
double style_mse(StyleReference const &s, FeatureMap const &fg);

void write_breakdown_csv(std::ostream &out, std::span<LossBreakdown const> steps);
void write_breakdown_csv(std::string const &path, std::span<LossBreakdown const> steps);

}  // namespace npst3
