#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "npst3/style_env.hpp"
#include "npst3/td3.hpp"

namespace npst3 {

// Trained policies keyed by style name, sharing one autoencoder and one
// configuration. Read-only after loading; safe to share across threads.
class StyleLibrary
{
public:
  StyleLibrary() = default;

  // Throws LoadError naming `source` when the policy's configuration or
  // autoencoder differs from the ones already in the library, or when the
  // style name is taken.
  void add(PolicyModel policy, std::string const &source = "<memory>");

  std::vector<std::string> names() const;
  bool                     contains(std::string const &style) const;
  std::size_t              size() const
  {
    return entries_.size();
  }

  StyleTransferConfig const &config() const;
  StyleEnv const            &env(std::string const &style) const;
  PolicyModel const         &policy(std::string const &style) const;

  // Eval-mode action of the style's actor. Calls for the same style are
  // serialized; they share no other state.
  Point3 act(std::string const &style, Observation const &obs) const;

private:
  struct Entry
  {
    std::unique_ptr<PolicyModel> policy;
    std::unique_ptr<StyleEnv>    env;
    std::unique_ptr<std::mutex>  mutex;
  };

  Entry const &entry(std::string const &style) const;

  std::map<std::string, Entry> entries_;
};

StyleLibrary load_library(std::span<std::string const> paths);

struct StylizeResult
{
  MotionTrajectory           generated;
  std::vector<LossBreakdown> breakdowns;
};

// Noise-free rollout of the style's policy on a 50-sample content trajectory.
StylizeResult stylize(StyleLibrary const &library, std::string const &style, MotionTrajectory const &content);

// Incremental stylization: one content point in, one generated point out.
class OnlineSession
{
public:
  OnlineSession(StyleLibrary const &library, std::string style);

  struct Output
  {
    std::size_t   step = 0;  // 0-based index of the generated sample
    Point3        point = Point3::Zero();
    LossBreakdown breakdown;
  };

  // Throws SessionCompleteError after 50 points.
  Output push(Point3 const &content_point);

  bool complete() const
  {
    return state_.done();
  }
  std::size_t pushes() const
  {
    return state_.t;
  }
  std::string const &style() const
  {
    return style_;
  }
  MotionTrajectory const &content() const
  {
    return state_.content;
  }
  MotionTrajectory const &generated() const
  {
    return state_.generated;
  }

private:
  StyleLibrary const *library_;
  std::string         style_;
  EnvState            state_;
};

OnlineSession         session_open(StyleLibrary const &library, std::string const &style);
OnlineSession::Output session_push(OnlineSession &session, Point3 const &content_point);

}  // namespace npst3
