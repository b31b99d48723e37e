#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "npst3/autoencoder.hpp"
#include "npst3/config.hpp"
#include "npst3/errors.hpp"
#include "npst3/motion.hpp"
#include "npst3/reward.hpp"
#include "npst3/stylizer.hpp"
#include "npst3/td3.hpp"
#include "npst3/teleop.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace npst3;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage   = 2;

// Input problems the user can fix; mapped to exit code 2.
class UsageError : public Error
{
public:
  using Error::Error;
};

struct CommonOptions
{
  std::string              config_path;
  std::string              profile = "paper";
  std::uint64_t            seed    = 0;
  std::vector<std::string> overrides;
};

void add_common(CLI::App *cmd, CommonOptions &opts)
{
  cmd->add_option("--config", opts.config_path, "JSON config file")->envname("NPST3_CONFIG");
  cmd->add_option("--profile", opts.profile, "Base settings before the config file: paper or desk")
    ->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--seed", opts.seed, "Random seed")->envname("NPST3_SEED");
  cmd->add_option("--set", opts.overrides, "Config override key=value (repeatable)");
}

void log(std::string const &msg)
{
  std::cerr << "npst3: " << msg << '\n';
}

// defaults < profile < config file < NPST3_* environment < --set
StyleTransferConfig effective_config(CommonOptions const &opts)
{
  StyleTransferConfig cfg = opts.profile == "desk" ? desk_scale_config() : StyleTransferConfig{};
  if (!opts.config_path.empty())
  {
    if (!fs::exists(opts.config_path))
    {
      throw UsageError("config file not found: " + opts.config_path);
    }
    cfg = load_config_file(opts.config_path, cfg);
  }
  apply_env_overrides(cfg);
  for (auto const &kv : opts.overrides)
  {
    auto const eq = kv.find('=');
    if (eq == std::string::npos)
    {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void require_file(std::string const &path, char const *what)
{
  if (!fs::is_regular_file(path))
  {
    throw UsageError(std::string(what) + " not found: " + path);
  }
}

void write_sidecar(fs::path const &output, std::string const &command, StyleTransferConfig const &cfg,
                   std::uint64_t seed, json inputs = json::object())
{
  fs::path sidecar = output;
  sidecar.replace_extension(".config.json");
  json j = {{"command", command}, {"seed", seed}, {"config", to_json(cfg)}, {"inputs", std::move(inputs)}};
  std::ofstream out(sidecar);
  if (!out)
  {
    throw Error("cannot write '" + sidecar.string() + "'");
  }
  out << j.dump(2) << '\n';
}

void ensure_parent(fs::path const &path)
{
  if (path.has_parent_path())
  {
    fs::create_directories(path.parent_path());
  }
}

MotionTrajectory read_trajectory_file(std::string const &path)
{
  auto const raw = import_marker_csv(path);
  if (raw.empty())
  {
    throw InsufficientDataError(path + ": no samples");
  }
  try
  {
    return resample(raw, raw.front().t);
  }
  catch (InsufficientDataError const &e)
  {
    throw InsufficientDataError(path + ": " + e.what());
  }
}

// gen-content ---------------------------------------------------------------

struct GenContentOptions
{
  CommonOptions common;
  std::string   out;
  int           count = 1;
};

int cmd_gen_content(GenContentOptions const &o)
{
  StyleTransferConfig const cfg = effective_config(o.common);
  if (o.count == 1 && fs::path(o.out).extension() == ".csv")
  {
    ensure_parent(o.out);
    write_trajectory_csv(o.out, gen_linear_content(o.common.seed, cfg));
    write_sidecar(o.out, "gen-content", cfg, o.common.seed);
    log("wrote " + o.out);
    return 0;
  }
  fs::create_directories(o.out);
  for (int i = 0; i < o.count; ++i)
  {
    char name[32];
    std::snprintf(name, sizeof(name), "content_%04d.csv", i);
    write_trajectory_csv((fs::path(o.out) / name).string(),
                         gen_linear_content(o.common.seed + static_cast<std::uint64_t>(i), cfg));
  }
  write_sidecar(fs::path(o.out) / "contents.csv", "gen-content", cfg, o.common.seed, {{"count", o.count}});
  log("wrote " + std::to_string(o.count) + " content trajectories to " + o.out);
  return 0;
}

// gen-style-fixture -----------------------------------------------------------

struct GenStyleOptions
{
  CommonOptions common;
  std::string   kind;
  std::string   out;
};

int cmd_gen_style_fixture(GenStyleOptions const &o)
{
  StyleTransferConfig const cfg = effective_config(o.common);
  if (!o.kind.empty())
  {
    StyleKind const kind = parse_style_kind(o.kind);
    ensure_parent(o.out);
    write_trajectory_csv(o.out, gen_synthetic_style(kind, o.common.seed));
    write_sidecar(o.out, "gen-style-fixture", cfg, o.common.seed, {{"kind", o.kind}});
    log("wrote " + o.out);
    return 0;
  }
  fs::create_directories(o.out);
  for (StyleKind kind : {StyleKind::JerkyFast, StyleKind::Bouncy, StyleKind::SmoothSlow, StyleKind::Drooping})
  {
    std::string const name = std::string(style_kind_name(kind)) + ".csv";
    write_trajectory_csv((fs::path(o.out) / name).string(), gen_synthetic_style(kind, o.common.seed));
  }
  std::ofstream manifest(fs::path(o.out) / "manifest.json");
  manifest << style_fixture_manifest().dump(2) << '\n';
  write_sidecar(fs::path(o.out) / "styles.csv", "gen-style-fixture", cfg, o.common.seed);
  log("wrote 4 style fixtures to " + o.out);
  return 0;
}

// train-autoencoder -------------------------------------------------------------

struct TrainAeOptions
{
  CommonOptions       common;
  std::string         corpus;
  std::string         out;
  std::string         history;
  std::optional<int>  epochs;
  double              stride = 5.0;
};

int cmd_train_autoencoder(TrainAeOptions const &o)
{
  StyleTransferConfig cfg = effective_config(o.common);
  if (o.epochs)
  {
    cfg.autoencoder.epochs = *o.epochs;
    cfg.validate();
  }
  if (!fs::is_directory(o.corpus))
  {
    throw UsageError("corpus directory not found: " + o.corpus);
  }
  std::vector<fs::path> files;
  for (auto const &entry : fs::directory_iterator(o.corpus))
  {
    if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
        entry.path().string().find(".config.") == std::string::npos)
    {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<NormalizedTrajectory> corpus;
  for (auto const &f : files)
  {
    auto const raw = import_marker_csv(f.string());
    for (auto const &w : resample_windows(raw, o.stride))
    {
      corpus.push_back(normalize(w, cfg));
    }
  }
  if (corpus.empty())
  {
    throw UsageError("no 5 s trajectories found in " + o.corpus);
  }
  log("training autoencoder on " + std::to_string(corpus.size()) + " trajectories for " +
      std::to_string(cfg.autoencoder.epochs) + " epochs");
  int const  every  = std::max(1, cfg.autoencoder.epochs / 10);
  auto       result = train_autoencoder(corpus, cfg, o.common.seed, [&](int epoch, double loss) {
    if (epoch % every == 0)
    {
      log("epoch " + std::to_string(epoch) + " mse " + std::to_string(loss));
    }
  });
  ensure_parent(o.out);
  write_checkpoint(o.out, result.model.to_checkpoint(cfg));

  std::string const history = o.history.empty() ? fs::path(o.out).replace_extension(".history.csv").string()
                                                : o.history;
  ensure_parent(history);
  std::ofstream h(history);
  h << "epoch,mse\n";
  for (std::size_t e = 0; e < result.loss_history.size(); ++e)
  {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), result.loss_history[e]);
    h << e << ',' << std::string(buf, ptr) << '\n';
  }
  write_sidecar(history, "train-autoencoder", cfg, o.common.seed,
                {{"corpus", o.corpus}, {"trajectories", corpus.size()}, {"checkpoint", o.out}});
  log("wrote " + o.out + " and " + history);
  return 0;
}

// train-policy ------------------------------------------------------------------

struct TrainPolicyOptions
{
  CommonOptions      common;
  std::string        style;
  std::string        style_id;
  std::string        autoencoder;
  std::string        out;
  std::string        curve;
  std::optional<int> episodes;
};

int cmd_train_policy(TrainPolicyOptions const &o)
{
  StyleTransferConfig cfg = effective_config(o.common);
  if (o.episodes)
  {
    cfg.td3.episodes = *o.episodes;
    cfg.validate();
  }
  if (!fs::is_regular_file(o.autoencoder))
  {
    throw DependencyError("autoencoder checkpoint not found: " + o.autoencoder);
  }
  require_file(o.style, "style file");
  Checkpoint const ae_ckpt = read_checkpoint(o.autoencoder);
  Autoencoder      ae      = Autoencoder::from_checkpoint(ae_ckpt);
  // The loss network's own settings travel with it.
  cfg.autoencoder = config_from_json(ae_ckpt.header.at("config")).autoencoder;
  MotionTrajectory const style = read_trajectory_file(o.style);
  std::string const      id    = o.style_id.empty() ? fs::path(o.style).stem().string() : o.style_id;

  log("training policy '" + id + "' for " + std::to_string(cfg.td3.episodes) + " episodes");
  int const     every = std::max(1, cfg.td3.episodes / 20);
  TrainingHooks hooks;
  hooks.on_episode = [&](EpisodeStats const &s) {
    if (s.episode % every == 0)
    {
      log("episode " + std::to_string(s.episode) + " return " + std::to_string(s.ret) + " l_p " +
          std::to_string(s.l_p));
    }
  };
  ensure_parent(o.out);
  hooks.on_checkpoint = [&](PolicyModel const &p, int) { write_checkpoint(o.out, p.to_checkpoint()); };
  auto result         = train_policy(id, style, ae, cfg, o.common.seed, hooks);
  write_checkpoint(o.out, result.policy.to_checkpoint());

  std::string const curve = o.curve.empty() ? fs::path(o.out).replace_extension(".curve.csv").string() : o.curve;
  ensure_parent(curve);
  write_learning_curve_csv(curve, result.curve);
  write_sidecar(curve, "train-policy", cfg, o.common.seed,
                {{"style", o.style}, {"style_id", id}, {"autoencoder", o.autoencoder}, {"checkpoint", o.out}});
  log("wrote " + o.out + " and " + curve);
  return 0;
}

// stylize ---------------------------------------------------------------------

struct StylizeOptions
{
  std::string policy;
  std::string content;
  std::string out;
  std::string trace;
};

int cmd_stylize(StylizeOptions const &o)
{
  require_file(o.policy, "policy checkpoint");
  require_file(o.content, "content file");
  std::string const paths[] = {o.policy};
  StyleLibrary const lib    = load_library(paths);
  std::string const  style  = lib.names().front();
  MotionTrajectory const content = read_trajectory_file(o.content);
  StylizeResult const    result  = stylize(lib, style, content);
  ensure_parent(o.out);
  write_trajectory_csv(o.out, result.generated);
  json inputs = {{"policy", o.policy}, {"style", style}, {"content", o.content}};
  write_sidecar(o.out, "stylize", lib.config(), lib.policy(style).seed, inputs);
  if (!o.trace.empty())
  {
    ensure_parent(o.trace);
    write_breakdown_csv(o.trace, result.breakdowns);
    write_sidecar(o.trace, "stylize", lib.config(), lib.policy(style).seed, inputs);
  }
  log("wrote " + o.out);
  return 0;
}

// serve -----------------------------------------------------------------------

struct ServeOptions
{
  std::vector<std::string> policies;
  std::string              host = "127.0.0.1";
  std::uint16_t            port = 8765;
  std::string              static_dir;
};

int cmd_serve(ServeOptions const &o)
{
  for (auto const &p : o.policies)
  {
    require_file(p, "policy checkpoint");
  }
  if (!o.static_dir.empty() && !fs::is_directory(o.static_dir))
  {
    throw UsageError("static asset directory not found: " + o.static_dir);
  }
  StyleLibrary const lib = load_library(o.policies);
  std::string        names;
  for (auto const &n : lib.names())
  {
    names += (names.empty() ? "" : ", ") + n;
  }
  log("loaded " + std::to_string(lib.size()) + " styles: " + names);
  teleop::Server server(lib, {o.host, o.port, o.static_dir});
  log("listening on " + o.host + ":" + std::to_string(server.port()));
  server.run(true);
  log("shut down");
  return 0;
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Motion style transfer with a neural style loss and a TD3 policy"};
  app.require_subcommand(1);

  GenContentOptions gen_content;
  auto *gc = app.add_subcommand("gen-content", "Write random straight-line content trajectories");
  add_common(gc, gen_content.common);
  gc->add_option("--out", gen_content.out, "Output CSV, or a directory when --count > 1")->required();
  gc->add_option("--count", gen_content.count, "Number of trajectories")->check(CLI::PositiveNumber);

  GenStyleOptions gen_style;
  auto *gs = app.add_subcommand("gen-style-fixture", "Write synthetic style demonstrations");
  add_common(gs, gen_style.common);
  gs->add_option("--kind", gen_style.kind, "jerky-fast, bouncy, smooth-slow or drooping; all four when omitted");
  gs->add_option("--out", gen_style.out, "Output CSV, or a directory without --kind")->required();

  TrainAeOptions train_ae;
  auto *ta = app.add_subcommand("train-autoencoder", "Train the loss-network autoencoder");
  add_common(ta, train_ae.common);
  ta->add_option("--corpus", train_ae.corpus, "Directory of marker CSV files")->required();
  ta->add_option("--out", train_ae.out, "Checkpoint path")->required();
  ta->add_option("--history", train_ae.history, "Loss history CSV (default: next to the checkpoint)");
  ta->add_option("--epochs", train_ae.epochs, "Override autoencoder.epochs")->check(CLI::PositiveNumber);
  ta->add_option("--stride", train_ae.stride, "Seconds between window starts")->check(CLI::PositiveNumber);

  TrainPolicyOptions train_policy_opts;
  auto *tp = app.add_subcommand("train-policy", "Train the TD3 policy for one style");
  add_common(tp, train_policy_opts.common);
  tp->add_option("--style", train_policy_opts.style, "Style demonstration CSV")->required();
  tp->add_option("--style-id", train_policy_opts.style_id, "Style name (default: file stem)");
  tp->add_option("--autoencoder", train_policy_opts.autoencoder, "Autoencoder checkpoint")->required();
  tp->add_option("--out", train_policy_opts.out, "Policy checkpoint path")->required();
  tp->add_option("--curve", train_policy_opts.curve, "Learning curve CSV (default: next to the checkpoint)");
  tp->add_option("--episodes", train_policy_opts.episodes, "Override td3.episodes")->check(CLI::PositiveNumber);

  StylizeOptions stylize_opts;
  auto *st = app.add_subcommand("stylize", "Stylize one content trajectory offline");
  st->add_option("--policy", stylize_opts.policy, "Policy checkpoint")->required();
  st->add_option("--content", stylize_opts.content, "Content CSV")->required();
  st->add_option("--out", stylize_opts.out, "Generated trajectory CSV")->required();
  st->add_option("--trace", stylize_opts.trace, "Per-step loss breakdown CSV");

  ServeOptions serve_opts;
  auto *sv = app.add_subcommand("serve", "Run the teleoperation service");
  sv->add_option("--policy", serve_opts.policies, "Policy checkpoint (repeatable)")->required();
  sv->add_option("--host", serve_opts.host, "Listen address");
  sv->add_option("--port", serve_opts.port, "Listen port");
  sv->add_option("--static", serve_opts.static_dir, "Directory of UI assets to serve");

  try
  {
    app.parse(argc, argv);
  }
  catch (CLI::ParseError const &e)
  {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try
  {
    if (gc->parsed())
      return cmd_gen_content(gen_content);
    if (gs->parsed())
      return cmd_gen_style_fixture(gen_style);
    if (ta->parsed())
      return cmd_train_autoencoder(train_ae);
    if (tp->parsed())
      return cmd_train_policy(train_policy_opts);
    if (st->parsed())
      return cmd_stylize(stylize_opts);
    if (sv->parsed())
      return cmd_serve(serve_opts);
  }
  catch (UsageError const &e)
  {
    log(e.what());
    return kExitUsage;
  }
  catch (ConfigError const &e)
  {
    log(std::string("config: ") + e.what());
    return kExitUsage;
  }
  catch (FormatError const &e)
  {
    log(e.what());
    return kExitUsage;
  }
  catch (InsufficientDataError const &e)
  {
    log(e.what());
    return kExitUsage;
  }
  catch (LookupError const &e)
  {
    log(e.what());
    return kExitUsage;
  }
  catch (DependencyError const &e)
  {
    log(e.what());
    return kExitUsage;
  }
  catch (LoadError const &e)
  {
    log(e.what());
    return kExitUsage;
  }
  catch (AddressInUseError const &e)
  {
    log(e.what());
    return kExitUsage;
  }
  catch (std::exception const &e)
  {
    log(std::string("error: ") + e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
