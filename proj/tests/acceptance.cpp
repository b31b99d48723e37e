// Prints one PASS/FAIL line per acceptance criterion and exits non-zero if
// any fails. Runs the desk-scale trainings, so expect tens of minutes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "npst3/autoencoder.hpp"
#include "npst3/nn/layers.hpp"
#include "npst3/nn/sequential.hpp"
#include "npst3/reward.hpp"
#include "npst3/stylizer.hpp"
#include "npst3/td3.hpp"
#include "support.hpp"

using namespace npst3;
using nn::Mode;
using nn::Tensor;
namespace ts = npst3::testing;

namespace {

constexpr double kGradTolerance   = 1e-3;
constexpr double kGradStep        = 1e-5;
constexpr int    kGradCases       = 20;
constexpr double kIdentityTol     = 1e-12;
constexpr double kOracleTol       = 1e-12;
constexpr double kAeReduction     = 0.90;
constexpr double kAeBudgetS       = 30 * 60;
constexpr double kLineErrorMm     = 30.0;
constexpr int    kSpeedWinsNeeded = 16;
constexpr int    kHeldOut         = 20;

int failures = 0;

void report(bool ok, char const *name, std::string const &detail)
{
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(char const *f, double a, double b = 0.0, double c = 0.0)
{
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double dot(Tensor const &a, Tensor const &b)
{
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    s += a[i] * b[i];
  }
  return s;
}

// Worst relative error of input and parameter gradients of <forward(x), r>.
double layer_gradient_error(nn::LayerSpec const &spec, nn::Shape const &shape, Mode mode, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  auto            layer = nn::make_layer(spec, seed);
  for (auto *p : layer->parameters())
  {
    nn::fill_uniform(p->value, 0.5, rng);
  }
  Tensor x = ts::random_tensor(shape, rng);
  nn::reseed_dropout(*layer, seed);
  Tensor const r = ts::random_tensor(layer->forward(x, mode).shape(), rng);
  auto         f = [&] {
    nn::reseed_dropout(*layer, seed);
    return dot(layer->forward(x, mode), r);
  };
  for (auto *p : layer->parameters())
  {
    p->grad.fill(0.0);
  }
  nn::reseed_dropout(*layer, seed);
  layer->forward(x, mode);
  Tensor const          dx = layer->backward(r);
  std::vector<double *> xs;
  for (double &v : x.values())
  {
    xs.push_back(&v);
  }
  double worst = ts::relative_error({dx.values().begin(), dx.values().end()}, ts::numeric_gradient(f, xs, kGradStep));
  std::vector<double *> ps;
  std::vector<double>   analytic;
  for (auto *p : layer->parameters())
  {
    for (std::size_t i = 0; i < p->value.size(); ++i)
    {
      ps.push_back(&p->value[i]);
      analytic.push_back(p->grad[i]);
    }
  }
  if (!ps.empty())
  {
    worst = std::max(worst, ts::relative_error(analytic, ts::numeric_gradient(f, ps, kGradStep)));
  }
  return worst;
}

std::vector<long> pattern_of(Autoencoder const &model, MotionTrajectory const &g, std::size_t t,
                             StyleTransferConfig const &cfg)
{
  return ts::activation_pattern(model, RowMatrix(normalize(g.prefix(t), cfg).matrix()));
}

// True when no +-h move of one generated coordinate crosses a ReLU or pooling
// boundary of the encoder.
bool smooth_in_g(Autoencoder const &model, MotionTrajectory const &g, std::size_t t, StyleTransferConfig const &cfg)
{
  auto const       base = pattern_of(model, g, t, cfg);
  TrajectoryMatrix m    = g.matrix();
  for (std::size_t k = 0; k < t; ++k)
  {
    for (int d = 0; d < 3; ++d)
    {
      for (double step : {kGradStep, -kGradStep})
      {
        TrajectoryMatrix p = m;
        p(static_cast<Eigen::Index>(k), d) += step;
        if (pattern_of(model, MotionTrajectory::from_matrix(p, t), t, cfg) != base)
        {
          return false;
        }
      }
    }
  }
  return true;
}

void gradient_integrity()
{
  auto const t0 = std::chrono::steady_clock::now();
  using namespace nn;
  struct Case
  {
    char const *name;
    LayerSpec   spec;
    Shape       shape;
    Mode        mode;
  };
  std::vector<Case> const cases = {
      {"conv1d", Conv1DSpec{3, 4, 5, Padding::Same}, {2, 10, 3}, Mode::Train},
      {"transposed-conv1d", TransposedConv1DSpec{4, 3, 5}, {2, 10, 4}, Mode::Train},
      {"maxpool1d", MaxPool1DSpec{2, 2}, {2, 8, 3}, Mode::Train},
      {"upsample1d", Upsample1DSpec{2}, {2, 6, 3}, Mode::Train},
      {"dense", DenseSpec{6, 4}, {3, 6}, Mode::Train},
      {"batchnorm-train", BatchNormSpec{4, 0.99, 1e-5}, {5, 4}, Mode::Train},
      {"batchnorm-eval", BatchNormSpec{4, 0.99, 1e-5}, {5, 4}, Mode::Eval},
      {"dropout", DropoutSpec{0.2}, {2, 6, 3}, Mode::Train},
      {"relu", ActivationSpec{Activation::ReLU}, {3, 5}, Mode::Train},
      {"tanh", ActivationSpec{Activation::Tanh}, {3, 5}, Mode::Train},
  };
  double      worst      = 0.0;
  std::string worst_name = "none";
  for (auto const &c : cases)
  {
    for (int k = 0; k < kGradCases; ++k)
    {
      double const e = layer_gradient_error(c.spec, c.shape, c.mode, 1000 + static_cast<std::uint64_t>(k));
      if (e > worst)
      {
        worst      = e;
        worst_name = c.name;
      }
    }
  }

  auto const     &model = ts::small_autoencoder();
  auto const      cfg   = ts::small_config();
  std::mt19937_64 rng(7);
  int             checked = 0;
  for (int c = 0; checked < kGradCases; ++c)
  {
    std::size_t const t       = 1 + static_cast<std::size_t>(c * 7) % 50;
    auto const        content = ts::random_trajectory(rng);
    auto const        style   = ts::random_trajectory(rng);
    auto const        g       = ts::random_trajectory(rng, t, 4.0);
    if (!smooth_in_g(model, g, t, cfg))
    {
      continue;
    }
    ++checked;
    StyleReference const   ref(model, style, cfg);
    TrajectoryMatrix const grad = total_loss_gradient(model, content, ref, g, t, cfg);
    TrajectoryMatrix       m    = g.matrix();
    auto f = [&] { return total_loss(model, content, ref, MotionTrajectory::from_matrix(m, t), t, cfg).total; };
    std::vector<double *> xs;
    std::vector<double>   analytic;
    for (std::size_t k = 0; k < t; ++k)
    {
      for (int d = 0; d < 3; ++d)
      {
        xs.push_back(&m(static_cast<Eigen::Index>(k), d));
        analytic.push_back(grad(static_cast<Eigen::Index>(k), d));
      }
    }
    double const e = ts::relative_error(analytic, ts::numeric_gradient(f, xs, kGradStep));
    if (e > worst)
    {
      worst      = e;
      worst_name = "total_loss";
    }
  }
  double const elapsed = seconds_since(t0);
  report(worst < kGradTolerance && elapsed < 120.0, "gradient-integrity",
         fmt("worst relative error %.2e (tol 1e-3), %.0f s (limit 120 s)", worst, elapsed) + ", worst at " +
             worst_name);
}

void loss_identities()
{
  auto const     &model = ts::small_autoencoder();
  auto const      cfg   = ts::small_config();
  std::mt19937_64 rng(11);
  double          worst = 0.0;
  for (int c = 0; c < 20; ++c)
  {
    auto const x  = ts::random_trajectory(rng);
    auto const nx = normalize(x, cfg);
    worst         = std::max(worst, std::abs(content_loss(model, nx, nx)));
    worst         = std::max(worst, std::abs(style_loss(model, nx, nx)));
    auto const b  = total_loss(model, x, x, x, 50, cfg);
    worst         = std::max({worst, std::abs(b.total), std::abs(b.reward - 1.0)});
    auto const g  = ts::random_trajectory(rng);
    for (std::size_t t = 1; t < 50; ++t)
    {
      worst = std::max(worst, std::abs(endpoint_loss(g, x, t, cfg)));
    }
  }
  report(worst <= kIdentityTol, "loss-identities", fmt("worst deviation %.2e (tol 1e-12)", worst));
}

double naive_gram(RowMatrix const &f, Eigen::Index i, Eigen::Index j)
{
  double s = 0.0;
  for (Eigen::Index t = 0; t < f.rows(); ++t)
  {
    s += f(t, i) * f(t, j);
  }
  return s / static_cast<double>(f.rows());
}

double naive_mse(RowMatrix const &a, RowMatrix const &b)
{
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
  {
    for (Eigen::Index j = 0; j < a.cols(); ++j)
    {
      s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    }
  }
  return s / static_cast<double>(a.size());
}

RowMatrix naive_gram_matrix(RowMatrix const &f)
{
  RowMatrix g(f.cols(), f.cols());
  for (Eigen::Index i = 0; i < f.cols(); ++i)
  {
    for (Eigen::Index j = 0; j < f.cols(); ++j)
    {
      g(i, j) = naive_gram(f, i, j);
    }
  }
  return g;
}

void oracle_equivalence()
{
  auto const     &model = ts::small_autoencoder();
  auto const      cfg   = ts::small_config();
  std::mt19937_64 rng(13);
  double          worst = 0.0;
  for (int c = 0; c < 10; ++c)
  {
    auto const      a  = normalize(ts::random_trajectory(rng), cfg);
    auto const      b  = normalize(ts::random_trajectory(rng), cfg);
    RowMatrix const fa = model.encode(a);
    RowMatrix const fb = model.encode(b);
    RowMatrix const ga = naive_gram_matrix(fa);
    RowMatrix const gb = naive_gram_matrix(fb);
    worst              = std::max(worst, (RowMatrix(gram(model.encode(a))) - ga).cwiseAbs().maxCoeff());
    worst              = std::max(worst, std::abs(content_loss(model, a, b) - naive_mse(fa, fb)));
    double const style = naive_mse(ga, gb);
    worst = std::max(worst, std::abs(style_loss(model, a, b) - style) / std::max(1.0, style));
  }

  // Twin-critic target against a loop written from the update rule.
  StyleTransferConfig const pcfg = ts::small_config();
  PolicyModel               p(pcfg, model, gen_synthetic_style(StyleKind::Bouncy, 1), "bouncy", 21);
  for (std::size_t t : {1, 3, 25, 49})
  {
    for (double raw : {0.3, 50.0})
    {
      auto obs = [&](std::size_t n) {
        Observation o;
        o.t = n;
        for (std::size_t k = 0; k < 50; ++k)
        {
          o.content.row(static_cast<Eigen::Index>(k)) = ts::random_trajectory(rng, 1)[0].transpose() / 300.0;
          if (k < n)
          {
            o.generated.row(static_cast<Eigen::Index>(k)) = o.content.row(static_cast<Eigen::Index>(k)) * 0.9;
          }
        }
        return o;
      };
      ReplayBuffer buffer(4);
      buffer.push(Transition{obs(t), Point3(1, -2, 3), 0.37, obs(t + 1), t + 1 == 50});
      std::vector<std::size_t> const pos{0};
      TransitionBatch const          batch = make_batch(buffer, pos);
      Tensor const                   noise({1, 3}, std::vector<double>{raw, -raw, 0.5 * raw});
      auto const                     y = critic_targets(p, batch, noise);

      double const clip = pcfg.td3.noise_clip_sigmas * pcfg.policy_noise_mm();
      Tensor       a    = p.actor_target.forward(batch.next_content, batch.next_generated, Mode::Eval);
      for (std::size_t d = 0; d < 3; ++d)
      {
        a[d] = std::clamp(a[d] + std::clamp(noise[d], -clip, clip), -pcfg.ar_mm(), pcfg.ar_mm());
      }
      double bound = 0.0;
      if (pcfg.td3.return_baseline)
      {
        for (std::size_t k = t + 1; k < 50; ++k)
        {
          bound += std::pow(pcfg.td3.gamma, static_cast<double>(k - t - 1));
        }
        bound *= pcfg.td3.value_scale;
      }
      double const q1 = p.critic1_target.forward(batch.next_content, batch.next_generated, a, Mode::Eval)[0] + bound;
      double const q2 = p.critic2_target.forward(batch.next_content, batch.next_generated, a, Mode::Eval)[0] + bound;
      double const expected =
          pcfg.td3.value_scale * 0.37 + (t + 1 == 50 ? 0.0 : pcfg.td3.gamma * std::min(q1, q2));
      worst = std::max(worst, std::abs(y[0] - expected));
    }
  }
  report(worst <= kOracleTol, "oracle-equivalence", fmt("worst deviation %.2e (tol 1e-12)", worst));
}

void default_conformance()
{
  StyleTransferConfig const c;
  bool const ok = c.rt_mm == 300.0 && c.ar_mm() == 30.0 && c.weights.content == 100.0 && c.weights.style == 1.0 &&
                  c.weights.position == 0.1 && c.weights.endpoint == 1.0 && c.weights.velocity == 20.0 &&
                  c.td3.replay_capacity == 10000 && c.td3.batch_size == 64 && c.autoencoder.batch_size == 256 &&
                  c.td3.critic_learning_rate == 1e-5 && c.td3.actor_learning_rate == 1e-6 && c.td3.gamma == 0.99 &&
                  c.td3.tau == 1e-3 && c.td3.policy_delay == 2 && c.td3.init_range == 3e-3 &&
                  std::abs(c.policy_noise_mm() - 0.6) < 1e-12 && std::abs(c.action_noise_mm() - 6.0) < 1e-12 &&
                  c.horizon == 50 && c.sample_hz == 10;
  report(ok, "default-conformance", "RT, AR, weights, replay, batches, rates, gamma, tau, delay, init, noises, horizon");
}

void td3_mechanics()
{
  auto const &model = ts::small_autoencoder();
  auto        cfg   = ts::small_config();
  std::string detail;
  bool        ok = true;

  // Action bound over 1e5 random observations at wild scales.
  {
    PolicyModel     p(cfg, model, gen_synthetic_style(StyleKind::JerkyFast, 1), "jerky-fast", 3);
    std::mt19937_64 rng(5);
    // Wide weights drive the tanh head into saturation.
    for (auto *param : p.actor.parameters())
    {
      nn::fill_uniform(param->value, 2.0, rng);
    }
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> logscale(-3.0, 3.0);
    double                                 worst = 0.0;
    constexpr int                          kInputs = 100000, kBatch = 500;
    for (int done = 0; done < kInputs; done += kBatch)
    {
      Tensor c({kBatch, 50, 3}), g({kBatch, 50, 3});
      for (std::size_t i = 0; i < c.size(); ++i)
      {
        double const s = std::pow(10.0, logscale(rng));
        c[i]           = s * u(rng);
        g[i]           = s * u(rng);
      }
      Tensor const a = p.actor.forward(c, g, Mode::Eval);
      for (double v : a.values())
      {
        worst = std::max(worst, std::isfinite(v) ? std::abs(v) : 1e300);
      }
    }
    bool const bound_ok = worst <= cfg.ar_mm();
    ok                  = ok && bound_ok;
    detail += fmt("max |a| %.3f mm over 1e5 inputs (AR %.0f)", worst, cfg.ar_mm());
  }

  // Actor updates per critic updates, counted on a direct update sequence.
  {
    PolicyModel     p(cfg, model, gen_synthetic_style(StyleKind::Bouncy, 1), "bouncy", 7);
    std::mt19937_64 rng(8);
    ReplayBuffer    buffer(100);
    for (std::size_t i = 0; i < 16; ++i)
    {
      Observation s, n;
      s.t = 1 + i;
      n.t = 2 + i;
      buffer.push(Transition{s, Point3(1, 0, 0), 0.5, n, false});
    }
    auto const            pos   = buffer.sample(16, rng);
    TransitionBatch const batch = make_batch(buffer, pos);
    bool                  counts_ok = true;
    for (std::uint64_t n = 1; n <= 25; ++n)
    {
      td3_update(p, batch, n);
      counts_ok = counts_ok && p.critic_updates == n && p.actor_updates == n / 2;
    }
    ok = ok && counts_ok;
    detail += counts_ok ? "; actor updates = floor(N/2) for N = 1..25" : "; actor update count wrong";
  }

  // FIFO eviction at capacity.
  {
    ReplayBuffer buffer(10000);
    for (int i = 0; i < 10003; ++i)
    {
      buffer.push(Transition{Observation{}, Point3::Zero(), static_cast<double>(i), Observation{}, false});
    }
    bool const fifo_ok = buffer.size() == 10000 && buffer.at(0).reward == 3.0 && buffer.at(9999).reward == 10002.0;
    ok                 = ok && fifo_ok;
    detail += fifo_ok ? "; FIFO keeps the newest 10000" : "; FIFO eviction wrong";
  }

  // Identical seeds give identical checkpoints.
  {
    cfg.td3.episodes = 3;
    auto const style = gen_synthetic_style(StyleKind::Drooping, 4);
    auto const a     = serialize_checkpoint(train_policy("drooping", style, model, cfg, 9).policy.to_checkpoint());
    auto const b     = serialize_checkpoint(train_policy("drooping", style, model, cfg, 9).policy.to_checkpoint());
    ok               = ok && a == b;
    detail += a == b ? "; checkpoints bitwise identical" : "; checkpoints differ";
  }
  report(ok, "td3-mechanics", detail);
}

Autoencoder autoencoder_training(StyleTransferConfig const &cfg)
{
  std::vector<NormalizedTrajectory> corpus;
  for (std::uint64_t i = 0; i < 200; ++i)
  {
    corpus.push_back(normalize(gen_linear_content(1000 + i, cfg), cfg));
  }
  auto const   t0        = std::chrono::steady_clock::now();
  auto         trained   = train_autoencoder(corpus, cfg, 7);
  double const elapsed   = seconds_since(t0);
  double const first     = trained.loss_history.front();
  double const last      = trained.loss_history.back();
  double const reduction = 1.0 - last / first;
  report(reduction >= kAeReduction && elapsed <= kAeBudgetS &&
             trained.loss_history.size() == static_cast<std::size_t>(cfg.autoencoder.epochs) + 1,
         "autoencoder-training",
         fmt("MSE %.3e -> %.3e, reduction %.1f%% (need 90%%)", first, last, 100.0 * reduction) +
             fmt(", %.0f s (limit 1800 s), %.0f epochs", elapsed, cfg.autoencoder.epochs));
  return trained.model;
}

std::vector<MotionTrajectory> held_out_contents(StyleTransferConfig const &cfg)
{
  std::vector<MotionTrajectory> out;
  for (int h = 0; h < kHeldOut; ++h)
  {
    out.push_back(gen_linear_content(900000 + static_cast<std::uint64_t>(h), cfg));
  }
  return out;
}

MotionTrajectory greedy_rollout(PolicyModel &policy, StyleEnv const &env, MotionTrajectory const &content)
{
  return rollout([&](Observation const &o) { return policy.act(o); }, env, content).generated;
}

PolicyModel line_style_training(Autoencoder const &ae, StyleTransferConfig const &cfg)
{
  auto const  t0     = std::chrono::steady_clock::now();
  auto const  style  = gen_linear_content(5, cfg);
  PolicyModel policy = train_policy("line", style, ae, cfg, 11).policy;
  StyleEnv    env(ae, style, cfg);
  double      err = 0.0;
  for (auto const &c : held_out_contents(cfg))
  {
    err += mean_position_error(greedy_rollout(policy, env, c), c);
  }
  err /= kHeldOut;
  report(err <= kLineErrorMm, "line-style-training",
         fmt("mean per-step position error %.2f mm (limit %.0f mm), %.0f s", err, kLineErrorMm, seconds_since(t0)) +
             ", " + std::to_string(cfg.td3.episodes) + " episodes");
  return policy;
}

PolicyModel jerky_fast_training(Autoencoder const &ae, StyleTransferConfig const &cfg)
{
  auto const   t0     = std::chrono::steady_clock::now();
  auto const   style  = gen_synthetic_style(StyleKind::JerkyFast, 5);
  PolicyModel  policy = train_policy("jerky-fast", style, ae, cfg, 12).policy;
  StyleEnv     env(ae, style, cfg);
  double const ss   = speed_stats(style).mean_step_mm;
  int          wins = 0;
  for (auto const &c : held_out_contents(cfg))
  {
    double const sg = speed_stats(greedy_rollout(policy, env, c)).mean_step_mm;
    double const sc = speed_stats(c).mean_step_mm;
    wins += std::abs(sg - ss) < std::abs(sc - ss) ? 1 : 0;
  }
  report(wins >= kSpeedWinsNeeded, "jerky-fast-style-effect",
         std::to_string(wins) + "/20 rollouts closer to the style speed (need 16)" +
             fmt(", %.0f s", seconds_since(t0)));
  return policy;
}

void online_offline(std::vector<PolicyModel> policies)
{
  StyleLibrary lib;
  for (auto &p : policies)
  {
    lib.add(std::move(p));
  }
  auto const      names = lib.names();
  std::mt19937_64 rng(17);
  int             identical = 0;
  for (int pair = 0; pair < 50; ++pair)
  {
    std::string const     &name    = names[static_cast<std::size_t>(pair) % names.size()];
    MotionTrajectory const content = pair % 2 == 0 ? ts::random_trajectory(rng) : gen_linear_content(rng(), lib.config());
    StylizeResult const    offline = stylize(lib, name, content);
    OnlineSession          session(lib, name);
    bool                   same = true;
    for (std::size_t k = 0; k < kHorizon; ++k)
    {
      auto const out = session.push(content[k]);
      same           = same && out.point == offline.generated[k] && out.breakdown == offline.breakdowns[k];
    }
    identical += same ? 1 : 0;
  }
  report(identical == 50, "online-offline-equivalence",
         std::to_string(identical) + "/50 (content, style) pairs bitwise identical over " +
             std::to_string(names.size()) + " styles");
}

}  // namespace

int main()
{
  gradient_integrity();
  loss_identities();
  oracle_equivalence();
  default_conformance();
  td3_mechanics();

  StyleTransferConfig const cfg  = desk_scale_config();
  Autoencoder const         ae   = autoencoder_training(cfg);
  PolicyModel               line = line_style_training(ae, cfg);
  PolicyModel               fast = jerky_fast_training(ae, cfg);
  std::vector<PolicyModel>  policies{line, fast};
  for (auto kind : {StyleKind::Bouncy, StyleKind::Drooping})
  {
    policies.emplace_back(cfg, ae, gen_synthetic_style(kind, 3), std::string(style_kind_name(kind)), 3);
  }
  online_offline(std::move(policies));

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
