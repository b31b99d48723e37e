#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "npst3/config.hpp"

namespace npst3 {

using Point3 = Eigen::Vector3d;

// Row-major [50, 3] matrix, the form every network consumes.
using TrajectoryMatrix = Eigen::Matrix<double, 50, 3, Eigen::RowMajor>;

inline constexpr std::size_t kHorizon     = 50;
inline constexpr double      kSamplePeriod = 0.1;

// Fixed-capacity Cartesian trajectory in mm sampled at 10 Hz. Rows at or past
// `filled()` are zero.
class MotionTrajectory
{
public:
  MotionTrajectory();

  // Zero-pads `prefix` to 50 samples. Throws CapacityError above 50 points.
  static MotionTrajectory from_points(std::span<Point3 const> prefix);
  static MotionTrajectory from_matrix(TrajectoryMatrix const &m, std::size_t filled);

  std::size_t filled() const
  {
    return filled_;
  }
  bool full() const
  {
    return filled_ == kHorizon;
  }

  Point3 const &operator[](std::size_t k) const
  {
    return samples_[k];
  }

  void push_back(Point3 const &p);

  // First k samples of this trajectory, zero beyond. k must be <= filled().
  MotionTrajectory prefix(std::size_t k) const;

  TrajectoryMatrix matrix() const;

  bool operator==(MotionTrajectory const &other) const;

private:
  std::array<Point3, kHorizon> samples_;
  std::size_t                  filled_ = 0;
};

// Trajectory centered at its first sample and scaled by 1/RT; keeps the
// origin and scale needed to invert the mapping.
class NormalizedTrajectory
{
public:
  NormalizedTrajectory() = default;
  NormalizedTrajectory(TrajectoryMatrix values, std::size_t filled, Point3 origin, double scale_mm);

  TrajectoryMatrix const &matrix() const
  {
    return values_;
  }
  std::size_t filled() const
  {
    return filled_;
  }
  Point3 const &origin() const
  {
    return origin_;
  }
  double scale_mm() const
  {
    return scale_mm_;
  }

private:
  TrajectoryMatrix values_   = TrajectoryMatrix::Zero();
  std::size_t      filled_   = 0;
  Point3           origin_   = Point3::Zero();
  double           scale_mm_ = 1.0;
};

struct TimedPoint
{
  double t = 0.0;  // seconds
  Point3 p = Point3::Zero();
};

// Linear interpolation of raw frames at window_start + k * 0.1 s, k = 0..49.
// The raw extent must cover [window_start, window_start + 4.9 s].
MotionTrajectory resample(std::span<TimedPoint const> raw, double window_start);

// Consecutive non-overlapping windows `stride_s` apart that fit in `raw`.
std::vector<MotionTrajectory> resample_windows(std::span<TimedPoint const> raw, double stride_s);

NormalizedTrajectory normalize(MotionTrajectory const &traj, StyleTransferConfig const &cfg);

// Centers on an explicit origin; an empty trajectory maps to all zeros.
NormalizedTrajectory normalize_about(MotionTrajectory const &traj, Point3 const &origin, double rt_mm);

MotionTrajectory denormalize(NormalizedTrajectory const &n);

MotionTrajectory pad_partial(std::span<Point3 const> prefix);

MotionTrajectory gen_linear_content(std::uint64_t seed, StyleTransferConfig const &cfg);

enum class StyleKind
{
  JerkyFast,
  Bouncy,
  SmoothSlow,
  Drooping,
};

std::string_view style_kind_name(StyleKind kind);
StyleKind        parse_style_kind(std::string_view name);

// Deterministic stand-in for a recorded demonstration. The per-kind speed
// profile is listed by style_fixture_manifest().
MotionTrajectory gen_synthetic_style(StyleKind kind, std::uint64_t seed);

nlohmann::json style_fixture_manifest();

struct SpeedStats
{
  double mean_step_mm = 0.0;
  double max_step_mm  = 0.0;
  double min_step_mm  = 0.0;
};

// Statistics of |x[k] - x[k-1]| over the filled samples.
SpeedStats speed_stats(MotionTrajectory const &traj);

std::vector<TimedPoint> import_marker_csv(std::string const &path);
std::vector<TimedPoint> parse_marker_csv(std::istream &in);

void write_trajectory_csv(std::ostream &out, MotionTrajectory const &traj);
void write_trajectory_csv(std::string const &path, MotionTrajectory const &traj);

}  // namespace npst3
