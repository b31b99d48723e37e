#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "npst3/errors.hpp"
#include "npst3/td3.hpp"
#include "support.hpp"

using namespace npst3;
namespace ts = npst3::testing;
using nn::Mode;
using nn::Tensor;

namespace {

Tensor random_observations(std::size_t n, std::mt19937_64 &rng, double scale = 0.2)
{
  return ts::random_tensor({n, kHorizon, 3}, rng, scale);
}

Observation random_observation(std::mt19937_64 &rng, std::size_t t)
{
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  Observation                            o;
  o.t = t;
  for (std::size_t k = 0; k <= t && k < kHorizon; ++k)
  {
    for (Eigen::Index d = 0; d < 3; ++d)
    {
      o.content(static_cast<Eigen::Index>(k), d) = u(rng);
      if (k < t)
      {
        o.generated(static_cast<Eigen::Index>(k), d) = u(rng);
      }
    }
  }
  return o;
}

Transition random_transition(std::mt19937_64 &rng, std::size_t t)
{
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  Transition                             tr;
  tr.state  = random_observation(rng, t);
  tr.next   = random_observation(rng, t + 1);
  tr.action = Point3(u(rng), u(rng), u(rng));
  tr.reward = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  tr.done   = t + 1 == kHorizon;
  return tr;
}

std::vector<double> flat_values(std::vector<nn::Param *> const &params)
{
  std::vector<double> out;
  for (auto *p : params)
  {
    out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  }
  return out;
}

// Up to `per_param` coordinates from every parameter tensor.
std::vector<double *> probe_coordinates(std::vector<nn::Param *> const &params, std::size_t per_param)
{
  std::vector<double *> out;
  for (auto *p : params)
  {
    std::size_t const n    = p->value.size();
    std::size_t const step = std::max<std::size_t>(1, n / per_param);
    for (std::size_t i = 0; i < n; i += step)
    {
      out.push_back(&p->value[i]);
    }
  }
  return out;
}

std::vector<double> grads_at(std::vector<nn::Param *> const &params, std::vector<double *> const &coords)
{
  std::vector<double> out;
  for (double *c : coords)
  {
    for (auto *p : params)
    {
      auto v = p->value.values();
      if (c >= v.data() && c < v.data() + v.size())
      {
        out.push_back(p->grad[static_cast<std::size_t>(c - v.data())]);
        break;
      }
    }
  }
  return out;
}

// Larger initial weights so gradients are not dominated by rounding.
template <class Net>
void spread_parameters(Net &net, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  for (auto *p : net.parameters())
  {
    if (p->name.find("gamma") == std::string::npos)
    {
      nn::fill_uniform(p->value, 0.3, rng);
    }
  }
}

struct PolicyFixture : ::testing::Test
{
  StyleTransferConfig cfg   = ts::small_config();
  Autoencoder const  &model = ts::small_autoencoder();
  MotionTrajectory    style = gen_synthetic_style(StyleKind::Bouncy, 1);
};

}  // namespace

TEST(Actor, ActionsStayWithinBound)
{
  StyleTransferConfig const cfg = ts::small_config();
  Actor                     actor(cfg, 3);
  spread_parameters(actor, 4);
  std::mt19937_64 rng(5);
  for (double scale : {0.2, 5.0, 1e3})
  {
    Tensor const a = actor.forward(random_observations(256, rng, scale), random_observations(256, rng, scale),
                                   Mode::Eval);
    ASSERT_EQ(a.shape(), (nn::Shape{256, 3}));
    for (double v : a.values())
    {
      EXPECT_LE(std::abs(v), cfg.ar_mm());
    }
  }
}

TEST(Actor, ParameterGradientMatchesFiniteDifferences)
{
  StyleTransferConfig const cfg = ts::small_config();
  Actor                     actor(cfg, 7);
  spread_parameters(actor, 8);
  std::mt19937_64 rng(9);
  Tensor const    c = random_observations(4, rng);
  Tensor const    g = random_observations(4, rng);
  Tensor const    r = ts::random_tensor({4, 3}, rng);
  auto            f = [&] {
    Tensor const a = actor.forward(c, g, Mode::Train);
    return std::inner_product(a.values().begin(), a.values().end(), r.values().begin(), 0.0);
  };
  auto params = actor.parameters();
  auto coords = probe_coordinates(params, 6);
  auto numeric = ts::numeric_gradient(f, coords, 1e-7);
  actor.zero_grad();
  actor.forward(c, g, Mode::Train);
  actor.backward(r);
  EXPECT_LT(ts::relative_error(grads_at(params, coords), numeric), 1e-5);
}

TEST(Critic, ActionGradientMatchesFiniteDifferences)
{
  StyleTransferConfig const cfg = ts::small_config();
  Critic                    critic(cfg, 11);
  spread_parameters(critic, 12);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial)
  {
    Tensor const c = random_observations(3, rng);
    Tensor const g = random_observations(3, rng);
    Tensor       a = ts::random_tensor({3, 3}, rng, 30.0);
    Tensor const w = ts::random_tensor({3, 1}, rng);
    auto         f = [&] {
      Tensor const q = critic.forward(c, g, a, Mode::Eval);
      return std::inner_product(q.values().begin(), q.values().end(), w.values().begin(), 0.0);
    };
    std::vector<double *> coords;
    for (double &v : a.values())
    {
      coords.push_back(&v);
    }
    auto const numeric = ts::numeric_gradient(f, coords, 1e-4);
    critic.forward(c, g, a, Mode::Eval);
    Tensor const da = critic.backward(w);
    EXPECT_LT(ts::relative_error(std::vector<double>(da.values().begin(), da.values().end()), numeric), 1e-5) << "trial " << trial;
  }
}

TEST(Critic, ParameterGradientMatchesFiniteDifferences)
{
  StyleTransferConfig const cfg = ts::small_config();
  Critic                    critic(cfg, 15);
  spread_parameters(critic, 16);
  std::mt19937_64 rng(17);
  Tensor const    c = random_observations(4, rng);
  Tensor const    g = random_observations(4, rng);
  Tensor const    a = ts::random_tensor({4, 3}, rng, 30.0);
  Tensor const    w = ts::random_tensor({4, 1}, rng);
  auto            f = [&] {
    Tensor const q = critic.forward(c, g, a, Mode::Train);
    return std::inner_product(q.values().begin(), q.values().end(), w.values().begin(), 0.0);
  };
  auto params  = critic.parameters();
  auto coords  = probe_coordinates(params, 6);
  // Small step: a ReLU of the generated stack sits within 1e-5 of its kink.
  auto numeric = ts::numeric_gradient(f, coords, 1e-7);
  critic.zero_grad();
  critic.forward(c, g, a, Mode::Train);
  critic.backward(w);
  EXPECT_LT(ts::relative_error(grads_at(params, coords), numeric), 1e-5);
}

TEST(Critic, OffsetIsAddedPerRow)
{
  StyleTransferConfig const cfg = ts::small_config();
  Critic                    critic(cfg, 19);
  std::mt19937_64           rng(20);
  Tensor const              c = random_observations(2, rng);
  Tensor const              g = random_observations(2, rng);
  Tensor const              a = ts::random_tensor({2, 3}, rng, 30.0);
  std::vector<double> const offset{5.0, -2.0};
  Tensor const              plain   = critic.forward(c, g, a, Mode::Eval);
  Tensor const              shifted = critic.forward(c, g, a, Mode::Eval, offset);
  EXPECT_EQ(shifted[0], plain[0] + 5.0);
  EXPECT_EQ(shifted[1], plain[1] - 2.0);
  std::vector<double> const wrong{1.0};
  EXPECT_THROW(critic.forward(c, g, a, Mode::Eval, wrong), ShapeError);
}

TEST(Critic, TwinsWithDifferentSeedsDiffer)
{
  StyleTransferConfig const cfg = ts::small_config();
  Critic                    q1(cfg, 1), q2(cfg, 2);
  EXPECT_NE(flat_values(q1.parameters()), flat_values(q2.parameters()));
}

TEST(ReplayBuffer, EvictsOldestFirst)
{
  ReplayBuffer    buffer(10000);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10001; ++i)
  {
    Transition t;
    t.reward = i;
    buffer.push(std::move(t));
  }
  EXPECT_EQ(buffer.size(), 10000u);
  EXPECT_EQ(buffer.at(0).reward, 1.0);
  EXPECT_EQ(buffer.at(9999).reward, 10000.0);
  EXPECT_THROW(buffer.at(10000), LookupError);
  EXPECT_THROW(ReplayBuffer(0), CapacityError);
}

TEST(ReplayBuffer, SamplesDistinctSeededPositions)
{
  ReplayBuffer buffer(100);
  for (int i = 0; i < 80; ++i)
  {
    buffer.push(Transition{});
  }
  std::mt19937_64 a(7), b(7);
  auto const      s1 = buffer.sample(64, a);
  auto const      s2 = buffer.sample(64, b);
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(std::set<std::size_t>(s1.begin(), s1.end()).size(), 64u);
  EXPECT_LT(*std::max_element(s1.begin(), s1.end()), 80u);
  EXPECT_THROW(buffer.sample(81, a), NotReadyError);
}

TEST(ReplayBuffer, BatchCarriesStepCounts)
{
  ReplayBuffer    buffer(10);
  std::mt19937_64 rng(3);
  buffer.push(random_transition(rng, 4));
  buffer.push(random_transition(rng, 49));
  std::vector<std::size_t> const pos{1, 0};
  TransitionBatch const          b = make_batch(buffer, pos);
  EXPECT_EQ(b.step, (std::vector<std::size_t>{49, 4}));
  EXPECT_EQ(b.next_step, (std::vector<std::size_t>{50, 5}));
  EXPECT_EQ(b.done[0], 1.0);
  EXPECT_EQ(b.done[1], 0.0);
  EXPECT_EQ(b.content.shape(), (nn::Shape{2, kHorizon, 3}));
  EXPECT_EQ(b.action[3], buffer.at(0).action.x());
}

TEST(ReturnBound, DiscountedCountOfRemainingSteps)
{
  StyleTransferConfig cfg;
  for (std::size_t t : {0, 1, 25, 49, 50})
  {
    double expected = 0.0;
    for (std::size_t k = t; k < 50; ++k)
    {
      expected += std::pow(cfg.td3.gamma, static_cast<double>(k - t));
    }
    EXPECT_NEAR(return_bound(t, cfg), expected, 1e-12) << t;
  }
  cfg.td3.return_baseline = false;
  EXPECT_EQ(return_bound(10, cfg), 0.0);
  cfg.td3.return_baseline = true;
  cfg.reward_mode         = RewardMode::Inverse;
  EXPECT_EQ(return_bound(10, cfg), 0.0);
}

TEST_F(PolicyFixture, RequiresTrainedAutoencoderAndFullStyle)
{
  EXPECT_THROW(PolicyModel(cfg, Autoencoder{}, style, "s", 1), DependencyError);
  EXPECT_THROW(PolicyModel(cfg, model, style.prefix(20), "s", 1), StateError);
}

TEST_F(PolicyFixture, CriticTargetMatchesOracle)
{
  PolicyModel     p(cfg, model, style, "bouncy", 21);
  std::mt19937_64 rng(22);
  for (std::size_t t : {3, 49})
  {
    ReplayBuffer buffer(4);
    buffer.push(random_transition(rng, t));
    std::vector<std::size_t> const pos{0};
    TransitionBatch const          batch = make_batch(buffer, pos);
    // One draw inside the clip range, one far outside it.
    for (double raw : {0.3, 50.0})
    {
      Tensor const noise({1, 3}, std::vector<double>{raw, -raw, 0.0});
      auto const   y = critic_targets(p, batch, noise);

      double const clip = 2.0 * 0.6;
      Tensor       a    = p.actor_target.forward(batch.next_content, batch.next_generated, Mode::Eval);
      for (std::size_t d = 0; d < 3; ++d)
      {
        a[d] = std::clamp(a[d] + std::clamp(noise[d], -clip, clip), -30.0, 30.0);
      }
      double bound = 0.0;
      for (std::size_t k = t + 1; k < 50; ++k)
      {
        bound += std::pow(0.99, static_cast<double>(k - t - 1));
      }
      double const q1 = p.critic1_target.forward(batch.next_content, batch.next_generated, a, Mode::Eval)[0] + bound;
      double const q2 = p.critic2_target.forward(batch.next_content, batch.next_generated, a, Mode::Eval)[0] + bound;
      double const expected = batch.reward[0] + (t + 1 == 50 ? 0.0 : 0.99 * std::min(q1, q2));
      ASSERT_EQ(y.size(), 1u);
      EXPECT_NEAR(y[0], expected, 1e-12) << "t " << t << " noise " << raw;
    }
  }
}

TEST_F(PolicyFixture, ActorAndTargetsMoveOnEveryOtherUpdate)
{
  PolicyModel     p(cfg, model, style, "bouncy", 31);
  std::mt19937_64 rng(32);
  ReplayBuffer    buffer(100);
  for (int i = 0; i < 16; ++i)
  {
    buffer.push(random_transition(rng, static_cast<std::size_t>(1 + i)));
  }
  std::vector<std::size_t> pos(16);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  TransitionBatch const batch = make_batch(buffer, pos);

  for (std::uint64_t k = 1; k <= 7; ++k)
  {
    auto const actor_before  = flat_values(p.actor.parameters());
    auto const target_before = flat_values(p.critic1_target.parameters());
    auto const critic_before = flat_values(p.critic1.parameters());
    auto const diag          = td3_update(p, batch, k);
    EXPECT_NE(flat_values(p.critic1.parameters()), critic_before) << k;
    EXPECT_EQ(diag.actor_updated, k % 2 == 0);
    if (k % 2 == 1)
    {
      EXPECT_EQ(flat_values(p.actor.parameters()), actor_before) << k;
      EXPECT_EQ(flat_values(p.critic1_target.parameters()), target_before) << k;
    }
    else
    {
      EXPECT_NE(flat_values(p.actor.parameters()), actor_before) << k;
      // target <- tau * online + (1 - tau) * target
      auto const online = flat_values(p.critic1.parameters());
      auto const after  = flat_values(p.critic1_target.parameters());
      for (std::size_t i = 0; i < after.size(); i += 17)
      {
        EXPECT_NEAR(after[i], 1e-3 * online[i] + (1 - 1e-3) * target_before[i], 1e-15);
      }
    }
  }
  EXPECT_EQ(p.critic_updates, 7u);
  EXPECT_EQ(p.actor_updates, 3u);
  EXPECT_THROW(td3_update(p, batch, 0), StateError);
}

TEST_F(PolicyFixture, TrainingIsDeterministicPerSeed)
{
  cfg.td3.episodes = 3;
  auto const a     = train_policy("bouncy", style, model, cfg, 41);
  auto const b     = train_policy("bouncy", style, model, cfg, 41);
  auto const c     = train_policy("bouncy", style, model, cfg, 42);
  std::string const bytes_a = serialize_checkpoint(a.policy.to_checkpoint());
  EXPECT_EQ(bytes_a, serialize_checkpoint(b.policy.to_checkpoint()));
  EXPECT_NE(bytes_a, serialize_checkpoint(c.policy.to_checkpoint()));
  EXPECT_EQ(a.curve.size(), 3u);
  // One update per environment step once 64 transitions are stored: from
  // step 15 of episode 2 on, 35 + 50 steps.
  EXPECT_EQ(a.policy.critic_updates, 85u);
  EXPECT_EQ(a.policy.actor_updates, 42u);
}

TEST_F(PolicyFixture, CheckpointRoundTripIsByteStable)
{
  cfg.td3.episodes      = 2;
  auto const        run = train_policy("bouncy", style, model, cfg, 51);
  std::string const bytes = serialize_checkpoint(run.policy.to_checkpoint());
  PolicyModel       back  = PolicyModel::from_checkpoint(deserialize_checkpoint(bytes, "mem"));
  EXPECT_EQ(serialize_checkpoint(back.to_checkpoint()), bytes);
  EXPECT_EQ(back.style_id, "bouncy");
  EXPECT_EQ(back.episodes_done, 2);

  std::mt19937_64   rng(52);
  Observation const o = random_observation(rng, 10);
  PolicyModel       orig = run.policy;
  EXPECT_EQ(back.act(o), orig.act(o));

  Checkpoint ae_only = model.to_checkpoint(cfg);
  EXPECT_THROW(PolicyModel::from_checkpoint(ae_only), LoadError);
}

TEST_F(PolicyFixture, LearningCurveCsv)
{
  std::vector<EpisodeStats> curve(2);
  curve[0].episode = 1;
  curve[0].ret     = 2.5;
  curve[1].episode = 2;
  curve[1].ret     = 3.0;
  curve[1].l_v     = 0.25;
  std::ostringstream out;
  write_learning_curve_csv(out, curve);
  EXPECT_EQ(out.str(), "episode,return,l_content,l_style,l_p,l_ep,l_v\n1,2.5,0,0,0,0,0\n2,3,0,0,0,0,0.25\n");
}

TEST_F(PolicyFixture, ShortRunImprovesReturn)
{
  cfg.td3.episodes = 100;
  auto const run   = train_policy("line", gen_synthetic_style(StyleKind::SmoothSlow, 2), model, cfg, 61);
  ASSERT_EQ(run.curve.size(), 100u);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i)
  {
    first += run.curve[static_cast<std::size_t>(i)].ret;
    last += run.curve[static_cast<std::size_t>(90 + i)].ret;
  }
  EXPECT_GE(last, first);
  for (auto const &s : run.curve)
  {
    EXPECT_TRUE(std::isfinite(s.ret));
  }
}
