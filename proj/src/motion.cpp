#include "npst3/motion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "npst3/errors.hpp"

namespace npst3 {

namespace {

constexpr double kWindowSpan   = kSamplePeriod * (kHorizon - 1);
constexpr double kTimeSlack    = 1e-9;

void check_finite(Point3 const &p)
{
  if (!p.allFinite())
  {
    throw FormatError("trajectory sample is not finite");
  }
}

Point3 unit_direction(std::mt19937_64 &rng)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  Point3                           d;
  do
  {
    d = Point3(normal(rng), normal(rng), normal(rng));
  } while (d.norm() < 1e-12);
  return d.normalized();
}

// Unit vector orthogonal to d.
Point3 orthogonal_to(Point3 const &d, std::mt19937_64 &rng)
{
  Point3 e;
  do
  {
    e = unit_direction(rng);
    e -= e.dot(d) * d;
  } while (e.norm() < 1e-6);
  return e.normalized();
}

std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t'))
  {
    s.remove_suffix(1);
  }
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
  {
    s.remove_prefix(1);
  }
  return s;
}

double parse_cell(std::string_view cell, std::size_t line, char const *column)
{
  cell = trim(cell);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || !std::isfinite(value))
  {
    throw FormatError(std::string("non-numeric value in column '") + column + "': '" +
                          std::string(cell) + "'",
                      line);
  }
  return value;
}

std::string format_double(double v)
{
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

MotionTrajectory::MotionTrajectory()
{
  samples_.fill(Point3::Zero());
}

MotionTrajectory MotionTrajectory::from_points(std::span<Point3 const> prefix)
{
  if (prefix.size() > kHorizon)
  {
    throw CapacityError("trajectory holds at most 50 samples, got " + std::to_string(prefix.size()));
  }
  MotionTrajectory t;
  for (auto const &p : prefix)
  {
    t.push_back(p);
  }
  return t;
}

MotionTrajectory MotionTrajectory::from_matrix(TrajectoryMatrix const &m, std::size_t filled)
{
  if (filled > kHorizon)
  {
    throw CapacityError("filled count " + std::to_string(filled) + " exceeds 50");
  }
  MotionTrajectory t;
  for (std::size_t k = 0; k < filled; ++k)
  {
    t.push_back(m.row(static_cast<Eigen::Index>(k)).transpose());
  }
  return t;
}

void MotionTrajectory::push_back(Point3 const &p)
{
  if (filled_ >= kHorizon)
  {
    throw CapacityError("trajectory is full (50 samples)");
  }
  check_finite(p);
  samples_[filled_++] = p;
}

MotionTrajectory MotionTrajectory::prefix(std::size_t k) const
{
  if (k > filled_)
  {
    throw StateError("prefix of " + std::to_string(k) + " samples requested from a trajectory with " +
                     std::to_string(filled_));
  }
  MotionTrajectory t;
  std::copy_n(samples_.begin(), k, t.samples_.begin());
  t.filled_ = k;
  return t;
}

TrajectoryMatrix MotionTrajectory::matrix() const
{
  TrajectoryMatrix m;
  for (std::size_t k = 0; k < kHorizon; ++k)
  {
    m.row(static_cast<Eigen::Index>(k)) = samples_[k].transpose();
  }
  return m;
}

bool MotionTrajectory::operator==(MotionTrajectory const &other) const
{
  return filled_ == other.filled_ && samples_ == other.samples_;
}

NormalizedTrajectory::NormalizedTrajectory(TrajectoryMatrix values, std::size_t filled, Point3 origin,
                                           double scale_mm)
  : values_(std::move(values))
  , filled_(filled)
  , origin_(std::move(origin))
  , scale_mm_(scale_mm)
{}

MotionTrajectory resample(std::span<TimedPoint const> raw, double window_start)
{
  for (std::size_t i = 1; i < raw.size(); ++i)
  {
    if (!(raw[i].t > raw[i - 1].t))
    {
      throw FormatError("timestamps must be strictly increasing (frame " + std::to_string(i) + ")");
    }
  }
  double const window_end = window_start + kWindowSpan;
  if (raw.empty() || raw.front().t > window_start + kTimeSlack || raw.back().t < window_end - kTimeSlack)
  {
    std::string extent = raw.empty() ? std::string("no frames")
                                     : "[" + format_double(raw.front().t) + ", " +
                                           format_double(raw.back().t) + "] s";
    throw InsufficientDataError("window [" + format_double(window_start) + ", " +
                                format_double(window_end) + "] s exceeds raw extent " + extent);
  }

  MotionTrajectory out;
  std::size_t      seg = 0;
  for (std::size_t k = 0; k < kHorizon; ++k)
  {
    double const t = std::clamp(window_start + kSamplePeriod * static_cast<double>(k), raw.front().t,
                                raw.back().t);
    while (seg + 1 < raw.size() && raw[seg + 1].t < t)
    {
      ++seg;
    }
    if (seg + 1 >= raw.size())
    {
      out.push_back(raw.back().p);
      continue;
    }
    TimedPoint const &a = raw[seg];
    TimedPoint const &b = raw[seg + 1];
    double const      u = (t - a.t) / (b.t - a.t);
    out.push_back(a.p + std::clamp(u, 0.0, 1.0) * (b.p - a.p));
  }
  return out;
}

std::vector<MotionTrajectory> resample_windows(std::span<TimedPoint const> raw, double stride_s)
{
  if (!(stride_s > 0.0))
  {
    throw ConfigError("window stride must be > 0");
  }
  std::vector<MotionTrajectory> out;
  if (raw.empty())
  {
    return out;
  }
  for (double start = raw.front().t; start + kWindowSpan <= raw.back().t + kTimeSlack; start += stride_s)
  {
    out.push_back(resample(raw, start));
  }
  return out;
}

NormalizedTrajectory normalize_about(MotionTrajectory const &traj, Point3 const &origin, double rt_mm)
{
  TrajectoryMatrix m = TrajectoryMatrix::Zero();
  for (std::size_t k = 0; k < traj.filled(); ++k)
  {
    m.row(static_cast<Eigen::Index>(k)) = ((traj[k] - origin) / rt_mm).transpose();
  }
  return NormalizedTrajectory(m, traj.filled(), origin, rt_mm);
}

NormalizedTrajectory normalize(MotionTrajectory const &traj, StyleTransferConfig const &cfg)
{
  if (traj.filled() == 0)
  {
    throw EmptyTrajectoryError("cannot normalize an empty trajectory");
  }
  return normalize_about(traj, traj[0], cfg.rt_mm);
}

MotionTrajectory denormalize(NormalizedTrajectory const &n)
{
  MotionTrajectory out;
  for (std::size_t k = 0; k < n.filled(); ++k)
  {
    out.push_back(n.matrix().row(static_cast<Eigen::Index>(k)).transpose() * n.scale_mm() + n.origin());
  }
  return out;
}

MotionTrajectory pad_partial(std::span<Point3 const> prefix)
{
  return MotionTrajectory::from_points(prefix);
}

MotionTrajectory gen_linear_content(std::uint64_t seed, StyleTransferConfig const &cfg)
{
  std::mt19937_64                        rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // unit() is in [0, 1), so the magnitude lands in (0.1 rt, rt].
  double const magnitude    = cfg.rt_mm - unit(rng) * 0.9 * cfg.rt_mm;
  Point3 const displacement = unit_direction(rng) * magnitude;
  MotionTrajectory out;
  for (std::size_t k = 0; k < kHorizon; ++k)
  {
    out.push_back(displacement * (static_cast<double>(k) / static_cast<double>(kHorizon - 1)));
  }
  return out;
}

std::string_view style_kind_name(StyleKind kind)
{
  switch (kind)
  {
  case StyleKind::JerkyFast:
    return "jerky-fast";
  case StyleKind::Bouncy:
    return "bouncy";
  case StyleKind::SmoothSlow:
    return "smooth-slow";
  case StyleKind::Drooping:
    return "drooping";
  }
  return "unknown";
}

StyleKind parse_style_kind(std::string_view name)
{
  for (StyleKind k : {StyleKind::JerkyFast, StyleKind::Bouncy, StyleKind::SmoothSlow, StyleKind::Drooping})
  {
    if (style_kind_name(k) == name)
    {
      return k;
    }
  }
  throw LookupError("unknown style fixture kind '" + std::string(name) +
                    "' (expected jerky-fast, bouncy, smooth-slow, drooping)");
}

MotionTrajectory gen_synthetic_style(StyleKind kind, std::uint64_t seed)
{
  std::mt19937_64                        rng(seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(kind) + 1)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Point3 const                           d = unit_direction(rng);
  Point3 const                           e = orthogonal_to(d, rng);
  Point3 const                           up(0.0, 0.0, 1.0);

  MotionTrajectory out;
  Point3           p = Point3::Zero();
  out.push_back(p);
  double const dt = kSamplePeriod;

  switch (kind)
  {
  case StyleKind::JerkyFast: {
    // Fast zig-zag across a drifting axis with occasional double strokes.
    double sign = 1.0;
    for (std::size_t k = 1; k < kHorizon; ++k)
    {
      if (unit(rng) > 0.15)
      {
        sign = -sign;
      }
      double const lateral = 16.0 + 4.0 * unit(rng);
      Point3 const jitter(2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0);
      p += 6.0 * d + sign * lateral * e + 2.0 * jitter;
      out.push_back(p);
    }
    break;
  }
  case StyleKind::Bouncy: {
    double const freq  = 0.9 + 0.2 * unit(rng);
    double const amp   = 35.0 + 10.0 * unit(rng);
    Point3 const drift = (d - d.dot(up) * up).norm() > 1e-6 ? (d - d.dot(up) * up).normalized() : e;
    for (std::size_t k = 1; k < kHorizon; ++k)
    {
      double const t = dt * static_cast<double>(k);
      Point3 const q = 4.0 * static_cast<double>(k) * drift +
                       amp * std::abs(std::sin(std::numbers::pi * freq * t)) * up;
      out.push_back(q);
    }
    break;
  }
  case StyleKind::SmoothSlow: {
    double const radius = 50.0 + 20.0 * unit(rng);
    for (std::size_t k = 1; k < kHorizon; ++k)
    {
      double const s     = static_cast<double>(k) / static_cast<double>(kHorizon - 1);
      double const ease  = 0.5 - 0.5 * std::cos(std::numbers::pi * s);
      double const theta = 0.5 * std::numbers::pi * ease;
      out.push_back(radius * ((std::cos(theta) - 1.0) * e + std::sin(theta) * d));
    }
    break;
  }
  case StyleKind::Drooping: {
    double const depth = 50.0 + 20.0 * unit(rng);
    double const reach = 120.0 + 40.0 * unit(rng);
    Point3 const ahead = (d - d.dot(up) * up).norm() > 1e-6 ? (d - d.dot(up) * up).normalized() : e;
    for (std::size_t k = 1; k < kHorizon; ++k)
    {
      double const s = static_cast<double>(k) / static_cast<double>(kHorizon - 1);
      // Decelerating forward reach while sagging with growing speed.
      out.push_back(reach * (1.0 - (1.0 - s) * (1.0 - s)) * ahead - depth * s * s * up);
    }
    break;
  }
  }
  return out;
}

nlohmann::json style_fixture_manifest()
{
  nlohmann::json m = nlohmann::json::array();
  m.push_back({{"kind", "jerky-fast"},
               {"profile", "zig-zag strokes of 16-20 mm across a 6 mm/sample drift"},
               {"mean_step_mm", "about 19"}});
  m.push_back({{"kind", "bouncy"},
               {"profile", "4 mm/sample drift with a 35-45 mm rectified-sine vertical bounce near 1 Hz"},
               {"mean_step_mm", "about 10"}});
  m.push_back({{"kind", "smooth-slow"},
               {"profile", "eased quarter arc of radius 50-70 mm"},
               {"mean_step_mm", "about 2, max below 3.5"}});
  m.push_back({{"kind", "drooping"},
               {"profile", "decelerating 120-160 mm reach with an accelerating 50-70 mm sag"},
               {"mean_step_mm", "about 4"}});
  return m;
}

SpeedStats speed_stats(MotionTrajectory const &traj)
{
  SpeedStats s;
  if (traj.filled() < 2)
  {
    return s;
  }
  s.min_step_mm = std::numeric_limits<double>::infinity();
  double sum    = 0.0;
  for (std::size_t k = 1; k < traj.filled(); ++k)
  {
    double const step = (traj[k] - traj[k - 1]).norm();
    sum += step;
    s.max_step_mm = std::max(s.max_step_mm, step);
    s.min_step_mm = std::min(s.min_step_mm, step);
  }
  s.mean_step_mm = sum / static_cast<double>(traj.filled() - 1);
  return s;
}

std::vector<TimedPoint> parse_marker_csv(std::istream &in)
{
  std::vector<TimedPoint> out;
  std::string             line;
  std::size_t             line_no = 0;
  bool                    header  = false;
  while (std::getline(in, line))
  {
    ++line_no;
    std::string_view view = trim(line);
    if (line_no == 1 && view.size() >= 3 && static_cast<unsigned char>(view[0]) == 0xEF &&
        static_cast<unsigned char>(view[1]) == 0xBB && static_cast<unsigned char>(view[2]) == 0xBF)
    {
      view.remove_prefix(3);
    }
    if (view.empty())
    {
      continue;
    }
    if (!header)
    {
      std::string h;
      for (char c : view)
      {
        if (c != ' ' && c != '\t')
        {
          h += c;
        }
      }
      if (h != "t,x,y,z")
      {
        throw FormatError("expected header 't,x,y,z', got '" + std::string(view) + "'", line_no);
      }
      header = true;
      continue;
    }
    std::vector<std::string_view> cells;
    std::size_t                   start = 0;
    while (true)
    {
      auto const comma = view.find(',', start);
      cells.push_back(view.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos)
      {
        break;
      }
      start = comma + 1;
    }
    if (cells.size() != 4)
    {
      throw FormatError("expected 4 columns (t,x,y,z), got " + std::to_string(cells.size()), line_no);
    }
    TimedPoint tp;
    tp.t = parse_cell(cells[0], line_no, "t");
    tp.p = Point3(parse_cell(cells[1], line_no, "x"), parse_cell(cells[2], line_no, "y"),
                  parse_cell(cells[3], line_no, "z"));
    if (!out.empty() && !(tp.t > out.back().t))
    {
      throw FormatError("time is not strictly increasing", line_no);
    }
    out.push_back(tp);
  }
  if (!header)
  {
    throw FormatError("missing header 't,x,y,z'", 1);
  }
  return out;
}

std::vector<TimedPoint> import_marker_csv(std::string const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw FormatError("cannot open marker file '" + path + "'");
  }
  try
  {
    return parse_marker_csv(in);
  }
  catch (FormatError const &e)
  {
    throw FormatError(e.detail(), e.line(), path);
  }
}

void write_trajectory_csv(std::ostream &out, MotionTrajectory const &traj)
{
  out << "t,x,y,z\n";
  for (std::size_t k = 0; k < traj.filled(); ++k)
  {
    out << format_double(kSamplePeriod * static_cast<double>(k)) << ',' << format_double(traj[k].x()) << ','
        << format_double(traj[k].y()) << ',' << format_double(traj[k].z()) << '\n';
  }
}

void write_trajectory_csv(std::string const &path, MotionTrajectory const &traj)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw Error("cannot write '" + path + "'");
  }
  write_trajectory_csv(out, traj);
}

}  // namespace npst3
