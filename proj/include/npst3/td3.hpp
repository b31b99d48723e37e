#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "npst3/autoencoder.hpp"
#include "npst3/checkpoint.hpp"
#include "npst3/config.hpp"
#include "npst3/motion.hpp"
#include "npst3/nn/adam.hpp"
#include "npst3/nn/sequential.hpp"
#include "npst3/style_env.hpp"

namespace npst3 {

// Conv1D -> BatchNorm -> ReLU per entry of widths.conv_channels.
std::vector<nn::LayerSpec> conv_stack_specs(StyleTransferConfig const &cfg);

// [B, 50, 3] tensors from observation matrices.
nn::Tensor observation_tensor(std::span<TrajectoryMatrix const *const> rows);

// Two conv stacks (content, generated), flattened and concatenated, then
// Dense + BatchNorm + ReLU blocks and a Dense(3) + Tanh head scaled by AR.
class Actor
{
public:
  Actor() = default;
  Actor(StyleTransferConfig const &cfg, std::uint64_t seed);

  // [B, 50, 3] each -> [B, 3] in mm.
  nn::Tensor forward(nn::Tensor const &content, nn::Tensor const &generated, nn::Mode mode);
  // Accumulates parameter gradients given d/d(action) of shape [B, 3].
  void backward(nn::Tensor const &grad_action);

  // Eval-mode action for one observation.
  Point3 act(Observation const &obs);

  std::vector<nn::Param *>  parameters();
  std::vector<nn::Tensor *> buffers();
  void                      zero_grad();

  nn::Sequential conv_c;
  nn::Sequential conv_g;
  nn::Sequential head;
  double         ar_mm = 30.0;

private:
  std::size_t flat_ = 0;
};

// Same conv stacks; the flattened state goes through its own Dense block and
// the action (divided by AR) through another. The two are concatenated and
// passed through the remaining Dense blocks down to a linear scalar.
class Critic
{
public:
  Critic() = default;
  Critic(StyleTransferConfig const &cfg, std::uint64_t seed);

  // -> [B, 1]; `offset`, when given, is added per row.
  nn::Tensor forward(nn::Tensor const &content, nn::Tensor const &generated, nn::Tensor const &action_mm,
                     nn::Mode mode, std::span<double const> offset = {});
  // Returns d/d(action) in 1/mm units, [B, 3]. With `state_grads` false the
  // conv stacks are skipped (their parameter gradients are left untouched).
  nn::Tensor backward(nn::Tensor const &grad_q, bool state_grads = true);

  std::vector<nn::Param *>  parameters();
  std::vector<nn::Tensor *> buffers();
  void                      zero_grad();

  nn::Sequential conv_c;
  nn::Sequential conv_g;
  nn::Sequential state_fc;
  nn::Sequential action_fc;
  nn::Sequential head;
  double         ar_mm = 30.0;

private:
  std::size_t flat_  = 0;
  std::size_t state_ = 0;
};

void soft_update(Actor &target, Actor &source, double tau);
void soft_update(Critic &target, Critic &source, double tau);

struct Transition
{
  Observation state;
  Point3      action = Point3::Zero();
  double      reward = 0.0;
  Observation next;
  bool        done = false;
};

// Fixed-capacity FIFO of transitions.
class ReplayBuffer
{
public:
  explicit ReplayBuffer(std::size_t capacity = 10000);

  void push(Transition t);

  std::size_t size() const
  {
    return items_.size();
  }
  std::size_t capacity() const
  {
    return capacity_;
  }

  // i-th oldest stored transition.
  Transition const &at(std::size_t i) const;

  // `batch` distinct positions (for at()), uniform over the stored items.
  // Throws NotReadyError when fewer than `batch` are stored.
  std::vector<std::size_t> sample(std::size_t batch, std::mt19937_64 &rng) const;

private:
  std::size_t             capacity_;
  std::vector<Transition> items_;
  std::size_t             oldest_ = 0;
};

struct TransitionBatch
{
  nn::Tensor content;         // [B, 50, 3]
  nn::Tensor generated;       // [B, 50, 3]
  nn::Tensor action;          // [B, 3] mm
  nn::Tensor reward;          // [B]
  nn::Tensor next_content;    // [B, 50, 3]
  nn::Tensor next_generated;  // [B, 50, 3]
  nn::Tensor done;            // [B], 1 for terminal
  std::vector<std::size_t> step;       // generated samples in the state
  std::vector<std::size_t> next_step;

  std::size_t size() const
  {
    return reward.size();
  }
};

TransitionBatch make_batch(ReplayBuffer const &buffer, std::span<std::size_t const> positions);

// Actor, twin critics, their targets and optimizer state for one style.
class PolicyModel
{
public:
  PolicyModel() = default;
  PolicyModel(StyleTransferConfig const &cfg, Autoencoder autoencoder, MotionTrajectory style, std::string style_id,
              std::uint64_t seed);

  Point3 act(Observation const &obs)
  {
    return actor.act(obs);
  }

  Actor  actor;
  Actor  actor_target;
  Critic critic1;
  Critic critic2;
  Critic critic1_target;
  Critic critic2_target;

  nn::AdamState actor_opt;
  nn::AdamState critic1_opt;
  nn::AdamState critic2_opt;

  StyleTransferConfig cfg;
  Autoencoder         autoencoder;
  MotionTrajectory    style;
  std::string         style_id;
  std::uint64_t       seed = 0;
  std::mt19937_64     rng;

  int           episodes_done  = 0;
  std::uint64_t critic_updates = 0;
  std::uint64_t actor_updates  = 0;

  Checkpoint         to_checkpoint() const;
  static PolicyModel from_checkpoint(Checkpoint const &ckpt);
};

// Discounted sum of unit rewards over the steps left after a state with t
// generated samples, times td3.value_scale; 0 when the baseline is disabled or
// rewards are unbounded.
double return_bound(std::size_t t, StyleTransferConfig const &cfg);

// y = k r + gamma * (1 - done) * min(Q1'(s', a'), Q2'(s', a')) with
// a' = clip(actor'(s') + clip(noise, +-c), +-AR), c = noise_clip_sigmas * sigma.
// k is td3.value_scale. `noise_mm` is the raw [B, 3] Gaussian draw.
std::vector<double> critic_targets(PolicyModel &policy, TransitionBatch const &batch, nn::Tensor const &noise_mm);

struct UpdateDiagnostics
{
  double critic1_loss  = 0.0;
  double critic2_loss  = 0.0;
  double actor_loss    = 0.0;
  bool   actor_updated = false;
};

// One TD3 update; `update_index` counts from 1. The actor and all targets
// move only when update_index is a multiple of the policy delay.
UpdateDiagnostics td3_update(PolicyModel &policy, TransitionBatch const &batch, std::uint64_t update_index);

struct EpisodeStats
{
  int    episode   = 0;
  double ret       = 0.0;
  double l_content = 0.0;
  double l_style   = 0.0;
  double l_p       = 0.0;
  double l_ep      = 0.0;
  double l_v       = 0.0;
};

struct TrainingHooks
{
  std::function<void(EpisodeStats const &)>             on_episode;
  std::function<void(PolicyModel const &, int episode)> on_checkpoint;
};

struct PolicyTraining
{
  PolicyModel               policy;
  std::vector<EpisodeStats> curve;
};

// Episodes on fresh random linear contents with Gaussian exploration noise;
// one update per environment step once a batch is available.
PolicyTraining train_policy(std::string const &style_id, MotionTrajectory const &style,
                            Autoencoder const &autoencoder, StyleTransferConfig const &cfg, std::uint64_t seed,
                            TrainingHooks const &hooks = {});

// Header `episode,return,l_content,l_style,l_p,l_ep,l_v`; losses are per-step
// means.
void write_learning_curve_csv(std::ostream &out, std::span<EpisodeStats const> curve);
void write_learning_curve_csv(std::string const &path, std::span<EpisodeStats const> curve);

}  // namespace npst3
