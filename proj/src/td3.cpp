#include "npst3/td3.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "npst3/errors.hpp"

namespace npst3 {

namespace {

using nn::Mode;
using nn::Tensor;

void append_dense_block(std::vector<nn::LayerSpec> &specs, std::size_t in, std::size_t out,
                        StyleTransferConfig const &cfg)
{
  specs.emplace_back(nn::DenseSpec{in, out});
  specs.emplace_back(nn::BatchNormSpec{out, cfg.bn_momentum, cfg.bn_epsilon});
  specs.emplace_back(nn::ActivationSpec{nn::Activation::ReLU});
}

std::vector<nn::LayerSpec> actor_head_specs(StyleTransferConfig const &cfg)
{
  auto const                &w  = cfg.td3.widths;
  std::size_t                in = 2 * kHorizon * w.conv_channels.back();
  std::vector<nn::LayerSpec> specs;
  for (std::size_t width : w.actor_dense)
  {
    append_dense_block(specs, in, width, cfg);
    in = width;
  }
  specs.emplace_back(nn::DenseSpec{in, 3});
  specs.emplace_back(nn::ActivationSpec{nn::Activation::Tanh});
  return specs;
}

std::vector<nn::LayerSpec> critic_state_specs(StyleTransferConfig const &cfg)
{
  std::vector<nn::LayerSpec> specs;
  append_dense_block(specs, 2 * kHorizon * cfg.td3.widths.conv_channels.back(), cfg.td3.widths.critic_state, cfg);
  return specs;
}

std::vector<nn::LayerSpec> critic_action_specs(StyleTransferConfig const &cfg)
{
  std::vector<nn::LayerSpec> specs;
  append_dense_block(specs, 3, cfg.td3.widths.critic_action, cfg);
  return specs;
}

std::vector<nn::LayerSpec> critic_head_specs(StyleTransferConfig const &cfg)
{
  auto const                &w  = cfg.td3.widths;
  std::size_t                in = w.critic_state + w.critic_action;
  std::vector<nn::LayerSpec> specs;
  for (std::size_t width : w.critic_dense)
  {
    append_dense_block(specs, in, width, cfg);
    in = width;
  }
  specs.emplace_back(nn::DenseSpec{in, 1});
  return specs;
}

// [B, T, C] -> [B, T*C]
Tensor flatten(Tensor const &t)
{
  return t.reshaped({t.dim(0), t.size() / t.dim(0)});
}

Tensor scaled(Tensor t, double factor)
{
  for (double &v : t.values())
  {
    v *= factor;
  }
  return t;
}

template <class... Nets>
std::vector<nn::Param *> collect_parameters(Nets &...nets)
{
  std::vector<nn::Param *> out;
  (
    [&] {
      auto p = nets.parameters();
      out.insert(out.end(), p.begin(), p.end());
    }(),
    ...);
  return out;
}

template <class... Nets>
std::vector<Tensor *> collect_buffers(Nets &...nets)
{
  std::vector<Tensor *> out;
  (
    [&] {
      auto b = nets.buffers();
      out.insert(out.end(), b.begin(), b.end());
    }(),
    ...);
  return out;
}

void zero(std::vector<nn::Param *> const &params)
{
  for (auto *p : params)
  {
    p->grad.fill(0.0);
  }
}

void check_specs(nn::Sequential const &net, std::vector<nn::LayerSpec> const &expected, std::string const &name)
{
  if (net.specs() != expected)
  {
    throw LoadError("network '" + name + "' does not match the configured architecture");
  }
}

std::string fmt(double v)
{
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<nn::LayerSpec> conv_stack_specs(StyleTransferConfig const &cfg)
{
  std::vector<nn::LayerSpec> specs;
  std::size_t                in = 3;
  for (std::size_t c : cfg.td3.widths.conv_channels)
  {
    specs.emplace_back(nn::Conv1DSpec{in, c, cfg.td3.widths.kernel, nn::Padding::Same});
    specs.emplace_back(nn::BatchNormSpec{c, cfg.bn_momentum, cfg.bn_epsilon});
    specs.emplace_back(nn::ActivationSpec{nn::Activation::ReLU});
    in = c;
  }
  return specs;
}

Tensor observation_tensor(std::span<TrajectoryMatrix const *const> rows)
{
  Tensor      t({rows.size(), kHorizon, 3});
  std::size_t const stride = kHorizon * 3;
  for (std::size_t b = 0; b < rows.size(); ++b)
  {
    std::copy_n(rows[b]->data(), stride, t.data() + b * stride);
  }
  return t;
}

// Actor ---------------------------------------------------------------------

Actor::Actor(StyleTransferConfig const &cfg, std::uint64_t seed)
  : conv_c(conv_stack_specs(cfg), seed)
  , conv_g(conv_stack_specs(cfg), seed + 1)
  , head(actor_head_specs(cfg), seed + 2)
  , ar_mm(cfg.ar_mm())
{
  std::mt19937_64 rng(seed);
  conv_c.init_uniform(cfg.td3.init_range, rng);
  conv_g.init_uniform(cfg.td3.init_range, rng);
  head.init_uniform(cfg.td3.init_range, rng);
}

Tensor Actor::forward(Tensor const &content, Tensor const &generated, Mode mode)
{
  Tensor const  fc = flatten(conv_c.forward(content, mode));
  Tensor const  fg = flatten(conv_g.forward(generated, mode));
  Tensor const *parts[] = {&fc, &fg};
  flat_                 = fc.dim(1);
  return scaled(head.forward(nn::concat_features(parts), mode), ar_mm);
}

void Actor::backward(Tensor const &grad_action)
{
  if (flat_ == 0)
  {
    throw StateError("Actor::backward called before forward");
  }
  std::size_t const batch    = grad_action.dim(0);
  std::size_t const widths[] = {flat_, flat_};
  auto const        parts    = nn::split_features(head.backward(scaled(grad_action, ar_mm)), widths);
  std::size_t const channels = flat_ / kHorizon;
  conv_c.backward(parts[0].reshaped({batch, kHorizon, channels}));
  conv_g.backward(parts[1].reshaped({batch, kHorizon, channels}));
}

Point3 Actor::act(Observation const &obs)
{
  TrajectoryMatrix const *c[] = {&obs.content};
  TrajectoryMatrix const *g[] = {&obs.generated};
  Tensor const            a   = forward(observation_tensor(c), observation_tensor(g), Mode::Eval);
  return Point3(a[0], a[1], a[2]);
}

std::vector<nn::Param *> Actor::parameters()
{
  return collect_parameters(conv_c, conv_g, head);
}

std::vector<Tensor *> Actor::buffers()
{
  return collect_buffers(conv_c, conv_g, head);
}

void Actor::zero_grad()
{
  zero(parameters());
}

// Critic --------------------------------------------------------------------

Critic::Critic(StyleTransferConfig const &cfg, std::uint64_t seed)
  : conv_c(conv_stack_specs(cfg), seed)
  , conv_g(conv_stack_specs(cfg), seed + 1)
  , state_fc(critic_state_specs(cfg), seed + 2)
  , action_fc(critic_action_specs(cfg), seed + 3)
  , head(critic_head_specs(cfg), seed + 4)
  , ar_mm(cfg.ar_mm())
{
  std::mt19937_64 rng(seed);
  conv_c.init_uniform(cfg.td3.init_range, rng);
  conv_g.init_uniform(cfg.td3.init_range, rng);
  state_fc.init_uniform(cfg.td3.init_range, rng);
  action_fc.init_uniform(cfg.td3.init_range, rng);
  head.init_uniform(cfg.td3.init_range, rng);
}

Tensor Critic::forward(Tensor const &content, Tensor const &generated, Tensor const &action_mm, Mode mode,
                       std::span<double const> offset)
{
  Tensor const  fc      = flatten(conv_c.forward(content, mode));
  Tensor const  fg      = flatten(conv_g.forward(generated, mode));
  Tensor const *parts[] = {&fc, &fg};
  flat_                 = fc.dim(1);
  Tensor const hs       = state_fc.forward(nn::concat_features(parts), mode);
  Tensor const ha       = action_fc.forward(scaled(action_mm, 1.0 / ar_mm), mode);
  state_                = hs.dim(1);
  Tensor const *joined[] = {&hs, &ha};
  Tensor        q        = head.forward(nn::concat_features(joined), mode);
  if (!offset.empty())
  {
    if (offset.size() != q.size())
    {
      throw ShapeError("critic offset has " + std::to_string(offset.size()) + " entries for a batch of " +
                       std::to_string(q.size()));
    }
    for (std::size_t i = 0; i < q.size(); ++i)
    {
      q[i] += offset[i];
    }
  }
  return q;
}

Tensor Critic::backward(Tensor const &grad_q, bool state_grads)
{
  if (flat_ == 0)
  {
    throw StateError("Critic::backward called before forward");
  }
  std::size_t const batch     = grad_q.dim(0);
  Tensor const      gh        = head.backward(grad_q);
  std::size_t const widths[]  = {state_, gh.dim(1) - state_};
  auto const        parts     = nn::split_features(gh, widths);
  Tensor            ga        = scaled(action_fc.backward(parts[1]), 1.0 / ar_mm);
  if (state_grads)
  {
    std::size_t const flat_widths[] = {flat_, flat_};
    auto const        fs            = nn::split_features(state_fc.backward(parts[0]), flat_widths);
    std::size_t const channels      = flat_ / kHorizon;
    conv_c.backward(fs[0].reshaped({batch, kHorizon, channels}));
    conv_g.backward(fs[1].reshaped({batch, kHorizon, channels}));
  }
  return ga;
}

std::vector<nn::Param *> Critic::parameters()
{
  return collect_parameters(conv_c, conv_g, state_fc, action_fc, head);
}

std::vector<Tensor *> Critic::buffers()
{
  return collect_buffers(conv_c, conv_g, state_fc, action_fc, head);
}

void Critic::zero_grad()
{
  zero(parameters());
}

void soft_update(Actor &target, Actor &source, double tau)
{
  nn::soft_update(target.conv_c, source.conv_c, tau);
  nn::soft_update(target.conv_g, source.conv_g, tau);
  nn::soft_update(target.head, source.head, tau);
}

void soft_update(Critic &target, Critic &source, double tau)
{
  nn::soft_update(target.conv_c, source.conv_c, tau);
  nn::soft_update(target.conv_g, source.conv_g, tau);
  nn::soft_update(target.state_fc, source.state_fc, tau);
  nn::soft_update(target.action_fc, source.action_fc, tau);
  nn::soft_update(target.head, source.head, tau);
}

// Replay buffer -------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity)
  : capacity_(capacity)
{
  if (capacity == 0)
  {
    throw CapacityError("replay buffer capacity must be positive");
  }
  items_.reserve(capacity);
}

void ReplayBuffer::push(Transition t)
{
  if (items_.size() < capacity_)
  {
    items_.push_back(std::move(t));
    return;
  }
  items_[oldest_] = std::move(t);
  oldest_         = (oldest_ + 1) % capacity_;
}

Transition const &ReplayBuffer::at(std::size_t i) const
{
  if (i >= items_.size())
  {
    throw LookupError("replay position " + std::to_string(i) + " out of range (size " +
                      std::to_string(items_.size()) + ")");
  }
  return items_[(oldest_ + i) % items_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t batch, std::mt19937_64 &rng) const
{
  if (items_.size() < batch)
  {
    throw NotReadyError("replay buffer holds " + std::to_string(items_.size()) + " transitions, batch needs " +
                        std::to_string(batch));
  }
  std::vector<std::size_t> all(items_.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(batch);
  std::sample(all.begin(), all.end(), std::back_inserter(out), batch, rng);
  return out;
}

TransitionBatch make_batch(ReplayBuffer const &buffer, std::span<std::size_t const> positions)
{
  std::size_t const                    n = positions.size();
  std::vector<TrajectoryMatrix const *> c, g, nc, ng;
  TransitionBatch                       b;
  b.action = Tensor({n, 3});
  b.reward = Tensor({n});
  b.done   = Tensor({n});
  for (std::size_t i = 0; i < n; ++i)
  {
    Transition const &t = buffer.at(positions[i]);
    c.push_back(&t.state.content);
    g.push_back(&t.state.generated);
    nc.push_back(&t.next.content);
    ng.push_back(&t.next.generated);
    for (std::size_t d = 0; d < 3; ++d)
    {
      b.action[i * 3 + d] = t.action[static_cast<Eigen::Index>(d)];
    }
    b.reward[i] = t.reward;
    b.done[i]   = t.done ? 1.0 : 0.0;
    b.step.push_back(t.state.t);
    b.next_step.push_back(t.next.t);
  }
  b.content        = observation_tensor(c);
  b.generated      = observation_tensor(g);
  b.next_content   = observation_tensor(nc);
  b.next_generated = observation_tensor(ng);
  return b;
}

// Policy model ----------------------------------------------------------------

PolicyModel::PolicyModel(StyleTransferConfig const &config, Autoencoder ae, MotionTrajectory style_demo,
                         std::string id, std::uint64_t seed_value)
  : actor_opt(config.td3.actor_learning_rate)
  , critic1_opt(config.td3.critic_learning_rate)
  , critic2_opt(config.td3.critic_learning_rate)
  , cfg(config)
  , autoencoder(std::move(ae))
  , style(std::move(style_demo))
  , style_id(std::move(id))
  , seed(seed_value)
{
  if (autoencoder.channels() == 0)
  {
    throw DependencyError("policy needs a trained autoencoder");
  }
  if (!style.full())
  {
    throw StateError("style demonstration must have 50 samples, got " + std::to_string(style.filled()));
  }
  cfg.validate();
  std::mt19937_64 seeder(seed_value);
  actor          = Actor(cfg, seeder());
  critic1        = Critic(cfg, seeder());
  critic2        = Critic(cfg, seeder());
  actor_target   = actor;
  critic1_target = critic1;
  critic2_target = critic2;
  rng.seed(seeder());
}

namespace {

template <class Fn>
void for_each_network(PolicyModel &p, Fn &&fn)
{
  auto actor = [&](std::string const &prefix, Actor &a) {
    fn(prefix + ".conv_c", a.conv_c);
    fn(prefix + ".conv_g", a.conv_g);
    fn(prefix + ".head", a.head);
  };
  auto critic = [&](std::string const &prefix, Critic &c) {
    fn(prefix + ".conv_c", c.conv_c);
    fn(prefix + ".conv_g", c.conv_g);
    fn(prefix + ".state_fc", c.state_fc);
    fn(prefix + ".action_fc", c.action_fc);
    fn(prefix + ".head", c.head);
  };
  actor("actor", p.actor);
  actor("actor_target", p.actor_target);
  critic("critic1", p.critic1);
  critic("critic2", p.critic2);
  critic("critic1_target", p.critic1_target);
  critic("critic2_target", p.critic2_target);
}

}  // namespace

Checkpoint PolicyModel::to_checkpoint() const
{
  auto      &self = const_cast<PolicyModel &>(*this);
  Checkpoint ckpt;
  ckpt.kind                     = CheckpointKind::Policy;
  ckpt.header["config"]         = to_json(cfg);
  ckpt.header["style_id"]       = style_id;
  ckpt.header["seed"]           = seed;
  ckpt.header["episodes_done"]  = episodes_done;
  ckpt.header["critic_updates"] = critic_updates;
  ckpt.header["actor_updates"]  = actor_updates;
  std::ostringstream rng_state;
  rng_state << rng;
  ckpt.header["rng_state"] = rng_state.str();
  nlohmann::json style_rows = nlohmann::json::array();
  for (std::size_t k = 0; k < style.filled(); ++k)
  {
    style_rows.push_back({style[k].x(), style[k].y(), style[k].z()});
  }
  ckpt.header["style"] = style_rows;
  for_each_network(self, [&](std::string const &name, nn::Sequential &net) { ckpt.add_network(name, net); });
  ckpt.embed("autoencoder", autoencoder.to_checkpoint(cfg));
  return ckpt;
}

PolicyModel PolicyModel::from_checkpoint(Checkpoint const &ckpt)
{
  if (ckpt.kind != CheckpointKind::Policy)
  {
    throw LoadError("checkpoint is not a policy");
  }
  PolicyModel p;
  try
  {
    p.cfg            = config_from_json(ckpt.header.at("config"));
    p.style_id       = ckpt.header.at("style_id").get<std::string>();
    p.seed           = ckpt.header.at("seed").get<std::uint64_t>();
    p.episodes_done  = ckpt.header.at("episodes_done").get<int>();
    p.critic_updates = ckpt.header.at("critic_updates").get<std::uint64_t>();
    p.actor_updates  = ckpt.header.at("actor_updates").get<std::uint64_t>();
    std::istringstream rng_state(ckpt.header.at("rng_state").get<std::string>());
    rng_state >> p.rng;
    if (!rng_state)
    {
      throw LoadError("malformed rng state");
    }
    std::vector<Point3> rows;
    for (auto const &r : ckpt.header.at("style"))
    {
      rows.emplace_back(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>());
    }
    p.style = MotionTrajectory::from_points(rows);
  }
  catch (nlohmann::json::exception const &e)
  {
    throw LoadError(std::string("policy header: ") + e.what());
  }
  catch (ConfigError const &e)
  {
    throw LoadError(std::string("policy config: ") + e.what());
  }
  if (!p.style.full())
  {
    throw LoadError("policy style demonstration is not 50 samples");
  }
  p.autoencoder = Autoencoder::from_checkpoint(ckpt.extract("autoencoder"));

  for_each_network(p, [&](std::string const &name, nn::Sequential &net) {
    net                  = ckpt.network(name);
    bool const  is_actor = name.rfind("actor", 0) == 0;
    auto const  suffix   = name.substr(name.find('.') + 1);
    std::vector<nn::LayerSpec> expected;
    if (suffix == "conv_c" || suffix == "conv_g")
    {
      expected = conv_stack_specs(p.cfg);
    }
    else if (suffix == "state_fc")
    {
      expected = critic_state_specs(p.cfg);
    }
    else if (suffix == "action_fc")
    {
      expected = critic_action_specs(p.cfg);
    }
    else
    {
      expected = is_actor ? actor_head_specs(p.cfg) : critic_head_specs(p.cfg);
    }
    check_specs(net, expected, name);
  });
  double const ar = p.cfg.ar_mm();
  for (Actor *a : {&p.actor, &p.actor_target})
  {
    a->ar_mm = ar;
  }
  for (Critic *c : {&p.critic1, &p.critic2, &p.critic1_target, &p.critic2_target})
  {
    c->ar_mm = ar;
  }
  p.actor_opt   = nn::AdamState(p.cfg.td3.actor_learning_rate);
  p.critic1_opt = nn::AdamState(p.cfg.td3.critic_learning_rate);
  p.critic2_opt = nn::AdamState(p.cfg.td3.critic_learning_rate);
  return p;
}

// Updates ---------------------------------------------------------------------

double return_bound(std::size_t t, StyleTransferConfig const &cfg)
{
  if (!cfg.td3.return_baseline || cfg.reward_mode != RewardMode::Bounded || t >= kHorizon)
  {
    return 0.0;
  }
  double const left = static_cast<double>(kHorizon - t);
  return cfg.td3.value_scale * (1.0 - std::pow(cfg.td3.gamma, left)) / (1.0 - cfg.td3.gamma);
}

namespace {

std::vector<double> bounds(std::vector<std::size_t> const &steps, StyleTransferConfig const &cfg)
{
  std::vector<double> out;
  out.reserve(steps.size());
  for (std::size_t t : steps)
  {
    out.push_back(return_bound(t, cfg));
  }
  return out;
}

}  // namespace

std::vector<double> critic_targets(PolicyModel &policy, TransitionBatch const &batch, Tensor const &noise_mm)
{
  StyleTransferConfig const &cfg = policy.cfg;
  std::size_t const          n   = batch.size();
  nn::require_shape(noise_mm, {n, 3}, "target noise");
  double const clip = cfg.td3.noise_clip_sigmas * cfg.policy_noise_mm();
  double const ar   = cfg.ar_mm();

  Tensor next_action = policy.actor_target.forward(batch.next_content, batch.next_generated, Mode::Eval);
  for (std::size_t i = 0; i < next_action.size(); ++i)
  {
    next_action[i] = std::clamp(next_action[i] + std::clamp(noise_mm[i], -clip, clip), -ar, ar);
  }
  std::vector<double> const offset = bounds(batch.next_step, cfg);
  Tensor const q1 =
      policy.critic1_target.forward(batch.next_content, batch.next_generated, next_action, Mode::Eval, offset);
  Tensor const q2 =
      policy.critic2_target.forward(batch.next_content, batch.next_generated, next_action, Mode::Eval, offset);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    y[i] = cfg.td3.value_scale * batch.reward[i] + cfg.td3.gamma * (1.0 - batch.done[i]) * std::min(q1[i], q2[i]);
  }
  return y;
}

namespace {

double regress_critic(Critic &critic, nn::AdamState &opt, TransitionBatch const &batch, std::vector<double> const &y,
                      std::vector<double> const &offset, char const *name, std::uint64_t update_index)
{
  std::size_t const n = batch.size();
  critic.zero_grad();
  Tensor const q = critic.forward(batch.content, batch.generated, batch.action, Mode::Train, offset);
  Tensor       grad({n, 1});
  double       loss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
  {
    double const d = q[i] - y[i];
    loss += d * d;
    grad[i] = 2.0 * d / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss))
  {
    throw NumericError(std::string(name) + " loss is not finite at update " + std::to_string(update_index));
  }
  critic.backward(grad);
  auto params = critic.parameters();
  adam_step(opt, params);
  return loss;
}

}  // namespace

UpdateDiagnostics td3_update(PolicyModel &policy, TransitionBatch const &batch, std::uint64_t update_index)
{
  if (update_index == 0)
  {
    throw StateError("update index counts from 1");
  }
  StyleTransferConfig const &cfg = policy.cfg;
  std::size_t const          n   = batch.size();

  Tensor                           noise({n, 3});
  std::normal_distribution<double> gauss(0.0, cfg.policy_noise_mm());
  for (double &v : noise.values())
  {
    v = gauss(policy.rng);
  }
  std::vector<double> const y = critic_targets(policy, batch, noise);

  std::vector<double> const offset = bounds(batch.step, cfg);
  UpdateDiagnostics         diag;
  diag.critic1_loss = regress_critic(policy.critic1, policy.critic1_opt, batch, y, offset, "critic1", update_index);
  diag.critic2_loss = regress_critic(policy.critic2, policy.critic2_opt, batch, y, offset, "critic2", update_index);
  policy.critic_updates += 1;

  if (update_index % static_cast<std::uint64_t>(cfg.td3.policy_delay) != 0)
  {
    return diag;
  }
  policy.actor.zero_grad();
  Tensor const a = policy.actor.forward(batch.content, batch.generated, Mode::Train);
  Tensor const q = policy.critic1.forward(batch.content, batch.generated, a, Mode::Eval, offset);
  double       mean_q = 0.0;
  for (std::size_t i = 0; i < n; ++i)
  {
    mean_q += q[i];
  }
  diag.actor_loss = -mean_q / static_cast<double>(n);
  if (!std::isfinite(diag.actor_loss))
  {
    throw NumericError("actor loss is not finite at update " + std::to_string(update_index));
  }
  Tensor const grad_q({n, 1}, -1.0 / static_cast<double>(n));
  policy.actor.backward(policy.critic1.backward(grad_q, false));
  auto params = policy.actor.parameters();
  adam_step(policy.actor_opt, params);

  soft_update(policy.actor_target, policy.actor, cfg.td3.tau);
  soft_update(policy.critic1_target, policy.critic1, cfg.td3.tau);
  soft_update(policy.critic2_target, policy.critic2, cfg.td3.tau);
  policy.actor_updates += 1;
  diag.actor_updated = true;
  return diag;
}

PolicyTraining train_policy(std::string const &style_id, MotionTrajectory const &style,
                            Autoencoder const &autoencoder, StyleTransferConfig const &cfg, std::uint64_t seed,
                            TrainingHooks const &hooks)
{
  PolicyTraining out{PolicyModel(cfg, autoencoder, style, style_id, seed), {}};
  PolicyModel   &p = out.policy;
  StyleEnv const env(p.autoencoder, p.style, p.cfg);
  ReplayBuffer   buffer(cfg.td3.replay_capacity);
  std::normal_distribution<double> explore(0.0, cfg.action_noise_mm());
  double const                     ar = cfg.ar_mm();

  for (int episode = 1; episode <= cfg.td3.episodes; ++episode)
  {
    MotionTrajectory const content = gen_linear_content(p.rng(), cfg);
    EnvState               s       = env.reset(content);
    EpisodeStats           stats;
    stats.episode   = episode;
    double discount = 1.0;
    while (!s.done())
    {
      Observation obs = env.observe(s);
      Point3      a   = Point3::Zero();
      if (s.t > 0)
      {
        a = p.act(obs);
        for (Eigen::Index d = 0; d < 3; ++d)
        {
          a[d] += explore(p.rng);
        }
        a = clip_action(a, ar);
      }
      StepResult r = env.step(s, a);
      if (s.t > 0)
      {
        buffer.push(Transition{std::move(obs), r.applied, r.reward, env.observe(r.state), r.done});
      }
      stats.ret += discount * r.reward;
      discount *= cfg.td3.gamma;
      stats.l_content += r.breakdown.l_content;
      stats.l_style += r.breakdown.l_style;
      stats.l_p += r.breakdown.l_p;
      stats.l_ep += r.breakdown.l_ep;
      stats.l_v += r.breakdown.l_v;
      s = std::move(r.state);

      if (buffer.size() >= cfg.td3.batch_size)
      {
        auto const positions = buffer.sample(cfg.td3.batch_size, p.rng);
        td3_update(p, make_batch(buffer, positions), p.critic_updates + 1);
      }
    }
    double const steps = static_cast<double>(kHorizon);
    stats.l_content /= steps;
    stats.l_style /= steps;
    stats.l_p /= steps;
    stats.l_ep /= steps;
    stats.l_v /= steps;
    p.episodes_done = episode;
    out.curve.push_back(stats);
    if (hooks.on_episode)
    {
      hooks.on_episode(stats);
    }
    if (hooks.on_checkpoint && cfg.td3.checkpoint_every > 0 &&
        (episode % cfg.td3.checkpoint_every == 0 || episode == cfg.td3.episodes))
    {
      hooks.on_checkpoint(p, episode);
    }
  }
  return out;
}

void write_learning_curve_csv(std::ostream &out, std::span<EpisodeStats const> curve)
{
  out << "episode,return,l_content,l_style,l_p,l_ep,l_v\n";
  for (auto const &e : curve)
  {
    out << e.episode << ',' << fmt(e.ret) << ',' << fmt(e.l_content) << ',' << fmt(e.l_style) << ',' << fmt(e.l_p)
        << ',' << fmt(e.l_ep) << ',' << fmt(e.l_v) << '\n';
  }
}

void write_learning_curve_csv(std::string const &path, std::span<EpisodeStats const> curve)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw Error("cannot write '" + path + "'");
  }
  write_learning_curve_csv(out, curve);
}

}  // namespace npst3
