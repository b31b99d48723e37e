#include "npst3/stylizer.hpp"

#include "npst3/errors.hpp"

namespace npst3 {

namespace {

// Training-schedule keys that do not affect inference.
nlohmann::json inference_config(StyleTransferConfig const &cfg)
{
  nlohmann::json j = to_json(cfg);
  j["td3"].erase("episodes");
  j["td3"].erase("checkpoint_every");
  j["autoencoder"].erase("epochs");
  return j;
}

std::string joined(std::vector<std::string> const &names)
{
  std::string out;
  for (auto const &n : names)
  {
    out += (out.empty() ? "" : ", ") + n;
  }
  return out;
}

}  // namespace

void StyleLibrary::add(PolicyModel policy, std::string const &source)
{
  if (entries_.contains(policy.style_id))
  {
    throw LoadError(source + ": style '" + policy.style_id + "' is already loaded");
  }
  if (!entries_.empty())
  {
    PolicyModel const &first = *entries_.begin()->second.policy;
    if (inference_config(first.cfg) != inference_config(policy.cfg))
    {
      throw LoadError(source + ": configuration differs from the other loaded policies");
    }
    if (first.autoencoder.parameter_hash() != policy.autoencoder.parameter_hash())
    {
      throw LoadError(source + ": autoencoder differs from the other loaded policies");
    }
  }
  Entry e;
  e.policy = std::make_unique<PolicyModel>(std::move(policy));
  e.env    = std::make_unique<StyleEnv>(e.policy->autoencoder, e.policy->style, e.policy->cfg);
  e.mutex  = std::make_unique<std::mutex>();
  std::string const name = e.policy->style_id;
  entries_.emplace(name, std::move(e));
}

std::vector<std::string> StyleLibrary::names() const
{
  std::vector<std::string> out;
  for (auto const &[name, e] : entries_)
  {
    out.push_back(name);
  }
  return out;
}

bool StyleLibrary::contains(std::string const &style) const
{
  return entries_.contains(style);
}

StyleLibrary::Entry const &StyleLibrary::entry(std::string const &style) const
{
  auto it = entries_.find(style);
  if (it == entries_.end())
  {
    throw LookupError("unknown style '" + style + "'; available: " + joined(names()));
  }
  return it->second;
}

StyleTransferConfig const &StyleLibrary::config() const
{
  if (entries_.empty())
  {
    throw StateError("style library is empty");
  }
  return entries_.begin()->second.policy->cfg;
}

StyleEnv const &StyleLibrary::env(std::string const &style) const
{
  return *entry(style).env;
}

PolicyModel const &StyleLibrary::policy(std::string const &style) const
{
  return *entry(style).policy;
}

Point3 StyleLibrary::act(std::string const &style, Observation const &obs) const
{
  Entry const                &e = entry(style);
  std::lock_guard<std::mutex> lock(*e.mutex);
  return e.policy->actor.act(obs);
}

StyleLibrary load_library(std::span<std::string const> paths)
{
  StyleLibrary lib;
  for (auto const &path : paths)
  {
    PolicyModel policy;
    try
    {
      policy = PolicyModel::from_checkpoint(read_checkpoint(path));
    }
    catch (LoadError const &e)
    {
      std::string const what = e.what();
      throw LoadError(what.rfind(path, 0) == 0 ? what : path + ": " + what);
    }
    catch (Error const &e)
    {
      throw LoadError(path + ": " + e.what());
    }
    lib.add(std::move(policy), path);
  }
  return lib;
}

StylizeResult stylize(StyleLibrary const &library, std::string const &style, MotionTrajectory const &content)
{
  StyleEnv const &env = library.env(style);
  RolloutResult   r   = rollout([&](Observation const &o) { return library.act(style, o); }, env, content);
  return {std::move(r.generated), std::move(r.breakdowns)};
}

OnlineSession::OnlineSession(StyleLibrary const &library, std::string style)
  : library_(&library)
  , style_(std::move(style))
{
  library.env(style_);
}

OnlineSession::Output OnlineSession::push(Point3 const &content_point)
{
  if (state_.done())
  {
    throw SessionCompleteError("session already received 50 points");
  }
  StyleEnv const &env = library_->env(style_);
  EnvState        next = state_;
  next.content.push_back(content_point);
  Point3 a = Point3::Zero();
  if (next.t > 0)
  {
    a = library_->act(style_, env.observe(next));
  }
  StepResult r = env.step(next, a);
  state_       = std::move(r.state);
  return {state_.t - 1, state_.generated[state_.t - 1], r.breakdown};
}

OnlineSession session_open(StyleLibrary const &library, std::string const &style)
{
  return OnlineSession(library, style);
}

OnlineSession::Output session_push(OnlineSession &session, Point3 const &content_point)
{
  return session.push(content_point);
}

}  // namespace npst3
