#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace npst3 {

// Loss weights of the total objective, in order (content, style, position,
// endpoint, velocity).
struct LossWeights
{
  double content  = 100.0;
  double style    = 1.0;
  double position = 0.1;
  double endpoint = 1.0;
  double velocity = 20.0;
};

enum class RewardMode
{
  Bounded,  // 1 / (1 + L)
  Inverse,  // 1 / (L + eps)
};

enum class VelocityMode
{
  PerStep,     // latest displacement only
  Trajectory,  // all displacements up to the current step
};

struct AutoencoderConfig
{
  int         epochs        = 1000;
  int         batch_size    = 256;
  double      learning_rate = 1e-3;
  double      dropout_rate  = 0.2;
  std::size_t channels      = 256;
  std::size_t kernel        = 5;
};

// Layer widths of the actor and critic networks.
struct NetworkWidths
{
  std::vector<std::size_t> conv_channels = {256, 128, 128};
  std::size_t              kernel        = 5;
  std::vector<std::size_t> actor_dense   = {512, 512, 400, 300};
  std::size_t              critic_state  = 512;
  std::size_t              critic_action = 512;
  std::vector<std::size_t> critic_dense  = {512, 400, 300};
};

struct Td3Config
{
  int         episodes               = 2500;
  std::size_t replay_capacity        = 10000;
  std::size_t batch_size             = 64;
  double      critic_learning_rate   = 1e-5;
  double      actor_learning_rate    = 1e-6;
  double      gamma                  = 0.99;
  int         policy_delay           = 2;
  double      tau                    = 1e-3;
  double      init_range             = 3e-3;
  double      policy_noise_fraction  = 0.002;
  double      noise_clip_sigmas      = 2.0;
  double      action_noise_fraction  = 0.02;
  int         checkpoint_every       = 100;
  // Critics predict Q minus the largest return still collectable (bounded
  // rewards only), so the network fits a small residual.
  bool        return_baseline        = true;
  // Rewards are multiplied by this factor for critic learning only; the
  // greedy policy of a scaled Q is unchanged.
  double      value_scale            = 1.0;
  NetworkWidths widths;
};

struct StyleTransferConfig
{
  double       rt_mm           = 300.0;
  double       ar_fraction     = 0.1;
  LossWeights  weights;
  int          sample_hz       = 10;
  std::size_t  horizon         = 50;
  double       bn_momentum     = 0.99;
  double       bn_epsilon      = 1e-5;
  RewardMode   reward_mode     = RewardMode::Bounded;
  double       inverse_epsilon = 1e-6;
  VelocityMode velocity_mode   = VelocityMode::PerStep;
  AutoencoderConfig autoencoder;
  Td3Config         td3;

  double ar_mm() const
  {
    return ar_fraction * rt_mm;
  }
  double policy_noise_mm() const
  {
    return td3.policy_noise_fraction * rt_mm;
  }
  double action_noise_mm() const
  {
    return td3.action_noise_fraction * rt_mm;
  }
  double sample_period_s() const
  {
    return 1.0 / sample_hz;
  }

  // Throws ConfigError when an invariant is violated.
  void validate() const;
};

nlohmann::json to_json(StyleTransferConfig const &cfg);

// Missing keys keep the values of `defaults`; unknown keys raise ConfigError.
StyleTransferConfig config_from_json(nlohmann::json const &j, StyleTransferConfig const &defaults = {});

// Applies dotted-path overrides such as "td3.episodes" = "100".
void apply_override(StyleTransferConfig &cfg, std::string const &dotted_key, std::string const &value);

// Reads NPST3_<KEY> variables, where KEY is the dotted path upper-cased with
// dots replaced by double underscores (NPST3_TD3__EPISODES).
void apply_env_overrides(StyleTransferConfig &cfg);

StyleTransferConfig load_config_file(std::string const &path, StyleTransferConfig const &defaults = {});

// Small-width, faster-learning settings used for desk-scale runs.
StyleTransferConfig desk_scale_config();

}  // namespace npst3
