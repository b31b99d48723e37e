#include "npst3/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "npst3/errors.hpp"

extern char **environ;

namespace npst3 {

using nlohmann::json;

namespace {

std::string reward_mode_name(RewardMode m)
{
  return m == RewardMode::Bounded ? "bounded" : "inverse";
}

RewardMode parse_reward_mode(std::string const &s)
{
  if (s == "bounded")
  {
    return RewardMode::Bounded;
  }
  if (s == "inverse")
  {
    return RewardMode::Inverse;
  }
  throw ConfigError("reward_mode must be 'bounded' or 'inverse', got '" + s + "'");
}

std::string velocity_mode_name(VelocityMode m)
{
  return m == VelocityMode::PerStep ? "per-step" : "trajectory";
}

VelocityMode parse_velocity_mode(std::string const &s)
{
  if (s == "per-step")
  {
    return VelocityMode::PerStep;
  }
  if (s == "trajectory")
  {
    return VelocityMode::Trajectory;
  }
  throw ConfigError("velocity_mode must be 'per-step' or 'trajectory', got '" + s + "'");
}

// Overlays `patch` onto `base`, rejecting keys that base does not have.
void merge_strict(json &base, json const &patch, std::string const &path)
{
  if (!patch.is_object())
  {
    throw ConfigError("expected an object at '" + (path.empty() ? std::string("<root>") : path) + "'");
  }
  for (auto const &[key, value] : patch.items())
  {
    std::string const full = path.empty() ? key : path + "." + key;
    if (!base.contains(key))
    {
      throw ConfigError("unknown config key '" + full + "'");
    }
    json &slot = base[key];
    if (slot.is_object())
    {
      merge_strict(slot, value, full);
    }
    else
    {
      bool const compatible = (slot.is_number() && value.is_number()) ||
                              (slot.is_string() && value.is_string()) ||
                              (slot.is_array() && value.is_array()) ||
                              (slot.is_boolean() && value.is_boolean());
      if (!compatible)
      {
        throw ConfigError("config key '" + full + "' has the wrong type");
      }
      slot = value;
    }
  }
}

template <class T>
T get(json const &j, char const *key)
{
  try
  {
    return j.at(key).get<T>();
  }
  catch (json::exception const &e)
  {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

json widths_json(NetworkWidths const &w)
{
  return json{{"conv_channels", w.conv_channels}, {"kernel", w.kernel},
              {"actor_dense", w.actor_dense},     {"critic_state", w.critic_state},
              {"critic_action", w.critic_action}, {"critic_dense", w.critic_dense}};
}

StyleTransferConfig from_full_json(json const &j)
{
  StyleTransferConfig cfg;
  cfg.rt_mm           = get<double>(j, "rt_mm");
  cfg.ar_fraction     = get<double>(j, "ar_fraction");
  cfg.sample_hz       = get<int>(j, "sample_hz");
  cfg.horizon         = get<std::size_t>(j, "horizon");
  cfg.bn_momentum     = get<double>(j, "bn_momentum");
  cfg.bn_epsilon      = get<double>(j, "bn_epsilon");
  cfg.reward_mode     = parse_reward_mode(get<std::string>(j, "reward_mode"));
  cfg.inverse_epsilon = get<double>(j, "inverse_epsilon");
  cfg.velocity_mode   = parse_velocity_mode(get<std::string>(j, "velocity_mode"));

  json const &w        = j.at("weights");
  cfg.weights.content  = get<double>(w, "content");
  cfg.weights.style    = get<double>(w, "style");
  cfg.weights.position = get<double>(w, "position");
  cfg.weights.endpoint = get<double>(w, "endpoint");
  cfg.weights.velocity = get<double>(w, "velocity");

  json const &a                = j.at("autoencoder");
  cfg.autoencoder.epochs        = get<int>(a, "epochs");
  cfg.autoencoder.batch_size    = get<int>(a, "batch_size");
  cfg.autoencoder.learning_rate = get<double>(a, "learning_rate");
  cfg.autoencoder.dropout_rate  = get<double>(a, "dropout_rate");
  cfg.autoencoder.channels      = get<std::size_t>(a, "channels");
  cfg.autoencoder.kernel        = get<std::size_t>(a, "kernel");

  json const &t                  = j.at("td3");
  cfg.td3.episodes               = get<int>(t, "episodes");
  cfg.td3.replay_capacity        = get<std::size_t>(t, "replay_capacity");
  cfg.td3.batch_size             = get<std::size_t>(t, "batch_size");
  cfg.td3.critic_learning_rate   = get<double>(t, "critic_learning_rate");
  cfg.td3.actor_learning_rate    = get<double>(t, "actor_learning_rate");
  cfg.td3.gamma                  = get<double>(t, "gamma");
  cfg.td3.policy_delay           = get<int>(t, "policy_delay");
  cfg.td3.tau                    = get<double>(t, "tau");
  cfg.td3.init_range             = get<double>(t, "init_range");
  cfg.td3.policy_noise_fraction  = get<double>(t, "policy_noise_fraction");
  cfg.td3.noise_clip_sigmas      = get<double>(t, "noise_clip_sigmas");
  cfg.td3.action_noise_fraction  = get<double>(t, "action_noise_fraction");
  cfg.td3.checkpoint_every       = get<int>(t, "checkpoint_every");
  cfg.td3.return_baseline        = get<bool>(t, "return_baseline");
  cfg.td3.value_scale            = get<double>(t, "value_scale");

  json const &nw                 = t.at("widths");
  cfg.td3.widths.conv_channels = get<std::vector<std::size_t>>(nw, "conv_channels");
  cfg.td3.widths.kernel        = get<std::size_t>(nw, "kernel");
  cfg.td3.widths.actor_dense   = get<std::vector<std::size_t>>(nw, "actor_dense");
  cfg.td3.widths.critic_state  = get<std::size_t>(nw, "critic_state");
  cfg.td3.widths.critic_action = get<std::size_t>(nw, "critic_action");
  cfg.td3.widths.critic_dense  = get<std::vector<std::size_t>>(nw, "critic_dense");
  cfg.validate();
  return cfg;
}

}  // namespace

void StyleTransferConfig::validate() const
{
  auto require = [](bool ok, char const *msg) {
    if (!ok)
    {
      throw ConfigError(msg);
    }
  };
  require(rt_mm > 0.0, "rt_mm must be > 0");
  require(ar_fraction > 0.0, "ar_fraction must be > 0");
  require(weights.content >= 0 && weights.style >= 0 && weights.position >= 0 &&
              weights.endpoint >= 0 && weights.velocity >= 0,
          "loss weights must be >= 0");
  require(horizon == 50, "horizon must be 50");
  require(sample_hz == 10, "sample_hz must be 10");
  require(bn_momentum >= 0.0 && bn_momentum < 1.0, "bn_momentum must be in [0, 1)");
  require(bn_epsilon > 0.0, "bn_epsilon must be > 0");
  require(inverse_epsilon > 0.0, "inverse_epsilon must be > 0");
  require(autoencoder.epochs >= 0, "autoencoder.epochs must be >= 0");
  require(autoencoder.batch_size >= 1, "autoencoder.batch_size must be >= 1");
  require(autoencoder.dropout_rate >= 0.0 && autoencoder.dropout_rate < 1.0,
          "autoencoder.dropout_rate must be in [0, 1)");
  require(autoencoder.channels >= 1, "autoencoder.channels must be >= 1");
  require(autoencoder.kernel % 2 == 1, "autoencoder.kernel must be odd");
  require(td3.episodes >= 0, "td3.episodes must be >= 0");
  require(td3.replay_capacity >= 1, "td3.replay_capacity must be >= 1");
  require(td3.batch_size >= 1, "td3.batch_size must be >= 1");
  require(td3.gamma >= 0.0 && td3.gamma <= 1.0, "td3.gamma must be in [0, 1]");
  require(td3.policy_delay >= 1, "td3.policy_delay must be >= 1");
  require(td3.tau > 0.0 && td3.tau <= 1.0, "td3.tau must be in (0, 1]");
  require(td3.init_range > 0.0, "td3.init_range must be > 0");
  require(td3.value_scale > 0.0, "td3.value_scale must be > 0");
  require(td3.policy_noise_fraction >= 0.0, "td3.policy_noise_fraction must be >= 0");
  require(td3.action_noise_fraction >= 0.0, "td3.action_noise_fraction must be >= 0");
  require(td3.widths.conv_channels.size() == 3, "td3.widths.conv_channels needs 3 entries");
  require(td3.widths.kernel % 2 == 1, "td3.widths.kernel must be odd");
  require(!td3.widths.actor_dense.empty(), "td3.widths.actor_dense must not be empty");
  require(!td3.widths.critic_dense.empty(), "td3.widths.critic_dense must not be empty");
}

json to_json(StyleTransferConfig const &cfg)
{
  json j;
  j["rt_mm"]           = cfg.rt_mm;
  j["ar_fraction"]     = cfg.ar_fraction;
  j["sample_hz"]       = cfg.sample_hz;
  j["horizon"]         = cfg.horizon;
  j["bn_momentum"]     = cfg.bn_momentum;
  j["bn_epsilon"]      = cfg.bn_epsilon;
  j["reward_mode"]     = reward_mode_name(cfg.reward_mode);
  j["inverse_epsilon"] = cfg.inverse_epsilon;
  j["velocity_mode"]   = velocity_mode_name(cfg.velocity_mode);
  j["weights"] = json{{"content", cfg.weights.content},   {"style", cfg.weights.style},
                      {"position", cfg.weights.position}, {"endpoint", cfg.weights.endpoint},
                      {"velocity", cfg.weights.velocity}};
  j["autoencoder"] = json{{"epochs", cfg.autoencoder.epochs},
                          {"batch_size", cfg.autoencoder.batch_size},
                          {"learning_rate", cfg.autoencoder.learning_rate},
                          {"dropout_rate", cfg.autoencoder.dropout_rate},
                          {"channels", cfg.autoencoder.channels},
                          {"kernel", cfg.autoencoder.kernel}};
  j["td3"] = json{{"episodes", cfg.td3.episodes},
                  {"replay_capacity", cfg.td3.replay_capacity},
                  {"batch_size", cfg.td3.batch_size},
                  {"critic_learning_rate", cfg.td3.critic_learning_rate},
                  {"actor_learning_rate", cfg.td3.actor_learning_rate},
                  {"gamma", cfg.td3.gamma},
                  {"policy_delay", cfg.td3.policy_delay},
                  {"tau", cfg.td3.tau},
                  {"init_range", cfg.td3.init_range},
                  {"policy_noise_fraction", cfg.td3.policy_noise_fraction},
                  {"noise_clip_sigmas", cfg.td3.noise_clip_sigmas},
                  {"action_noise_fraction", cfg.td3.action_noise_fraction},
                  {"checkpoint_every", cfg.td3.checkpoint_every},
                  {"return_baseline", cfg.td3.return_baseline},
                  {"value_scale", cfg.td3.value_scale},
                  {"widths", widths_json(cfg.td3.widths)}};
  return j;
}

StyleTransferConfig config_from_json(json const &j, StyleTransferConfig const &defaults)
{
  json base = to_json(defaults);
  merge_strict(base, j, "");
  return from_full_json(base);
}

void apply_override(StyleTransferConfig &cfg, std::string const &dotted_key, std::string const &value)
{
  json        base = to_json(cfg);
  json       *slot = &base;
  std::string part;
  std::istringstream in(dotted_key);
  while (std::getline(in, part, '.'))
  {
    if (!slot->is_object() || !slot->contains(part))
    {
      throw ConfigError("unknown config key '" + dotted_key + "'");
    }
    slot = &(*slot)[part];
  }
  if (slot->is_object())
  {
    throw ConfigError("config key '" + dotted_key + "' is a section, not a value");
  }
  if (slot->is_string())
  {
    *slot = value;
  }
  else
  {
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded())
    {
      throw ConfigError("cannot parse value '" + value + "' for config key '" + dotted_key + "'");
    }
    bool const compatible = (slot->is_number() && parsed.is_number()) ||
                            (slot->is_array() && parsed.is_array()) ||
                            (slot->is_boolean() && parsed.is_boolean());
    if (!compatible)
    {
      throw ConfigError("config key '" + dotted_key + "' has the wrong type");
    }
    *slot = parsed;
  }
  cfg = from_full_json(base);
}

void apply_env_overrides(StyleTransferConfig &cfg)
{
  std::string const prefix = "NPST3_";
  for (char **env = environ; env != nullptr && *env != nullptr; ++env)
  {
    std::string entry(*env);
    if (entry.rfind(prefix, 0) != 0)
    {
      continue;
    }
    auto const eq = entry.find('=');
    if (eq == std::string::npos)
    {
      continue;
    }
    std::string name  = entry.substr(prefix.size(), eq - prefix.size());
    std::string value = entry.substr(eq + 1);
    // Variables that are not config paths (NPST3_SEED and friends) are
    // consumed by the CLI layer.
    if (name == "SEED" || name == "CONFIG")
    {
      continue;
    }
    std::string key;
    for (std::size_t i = 0; i < name.size(); ++i)
    {
      if (name[i] == '_' && i + 1 < name.size() && name[i + 1] == '_')
      {
        key += '.';
        ++i;
      }
      else
      {
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
      }
    }
    apply_override(cfg, key, value);
  }
}

StyleTransferConfig load_config_file(std::string const &path, StyleTransferConfig const &defaults)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ConfigError("cannot open config file '" + path + "'");
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded())
  {
    throw ConfigError("config file '" + path + "' is not valid JSON");
  }
  return config_from_json(j, defaults);
}

StyleTransferConfig desk_scale_config()
{
  StyleTransferConfig cfg;
  cfg.td3.widths.conv_channels = {8, 4, 4};
  cfg.td3.widths.actor_dense   = {32, 32, 24, 16};
  cfg.td3.widths.critic_state  = 32;
  cfg.td3.widths.critic_action = 32;
  cfg.td3.widths.critic_dense  = {32, 24, 16};
  cfg.td3.critic_learning_rate = 1e-3;
  cfg.td3.actor_learning_rate  = 1e-4;
  cfg.td3.episodes             = 500;
  return cfg;
}

}  // namespace npst3
