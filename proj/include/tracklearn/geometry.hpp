#pragma once

#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tracklearn {

inline constexpr double kPi = std::numbers::pi;

/// Control/sample period of the whole toolkit: 20 Hz.
inline constexpr double kTick = 0.05;

/// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

/// Planar pose in the global frame W. theta is kept wrapped to (-pi, pi].
struct Pose2 {
  double x = 0.0;      // m
  double y = 0.0;      // m
  double theta = 0.0;  // rad, (-pi, pi]

  Pose2() = default;
  Pose2(double x_, double y_, double theta_);
};

/// One timestamped sample of a reference trajectory.
struct PathPoint {
  double t = 0.0;  // s, strictly increasing within a buffer
  Pose2 pose;
  double speed = 0.0;  // m/s, >= 0
};

enum class SourceTag { Virtual, RealLog };

const char* to_string(SourceTag tag);
SourceTag source_tag_from_string(const std::string_view s);

/// Ordered buffer of reference poses+speeds (the recorded trajectory the
/// agent has to follow). At least 2 points, strictly increasing timestamps,
/// no zero-length segments.
struct PathBuffer {
  std::vector<PathPoint> points;
  SourceTag source_tag = SourceTag::Virtual;

  PathBuffer() = default;
  PathBuffer(std::vector<PathPoint> pts, SourceTag tag);

  std::size_t size() const { return points.size(); }
  double duration() const { return points.back().t - points.front().t; }

  /// Throws std::domain_error on any invariant violation.
  void validate() const;
};

/// Deviations of an agent pose from one reference point, expressed in the
/// reference point's frame. eps_d > 0 means the agent sits to the left of
/// the reference heading; eps_theta = agent heading - reference heading.
struct ErrorState {
  double eps_d = 0.0;      // m
  double eps_theta = 0.0;  // rad, (-pi, pi]
  double dx_long = 0.0;    // m, agent's longitudinal offset past the reference point
  std::size_t ref_index = 0;
  double ref_speed = 0.0;  // m/s
};

/// Index of the reference point the deviations are computed against: the
/// point closest in Euclidean distance among those the agent has not yet
/// passed (agent's longitudinal coordinate in the candidate's frame <= 0).
/// Falls back to the last index when every point is behind the agent.
/// With a hint, the scan is windowed to hint +/- 50 and falls back to a
/// full scan if the window holds no candidate.
std::size_t closest_next_point(const PathBuffer& buffer, const Pose2& agent,
                               std::optional<std::size_t> hint = std::nullopt);

/// Error-frame computation: with E = buffer[idx].pose and
/// H = translation(E.x,E.y) * rotation(E.theta), returns the agent position
/// mapped through H^-1 plus the wrapped heading difference.
ErrorState error_state(const PathBuffer& buffer, const Pose2& agent, std::size_t idx);

/// Resample onto a uniform dt grid spanning [t0, t_end]: linear in x, y and
/// speed, shortest-arc (unit-vector) interpolation in theta.
PathBuffer resample_path(const PathBuffer& buffer, double dt);

/// Rigid SE(2) transform of a pose (rotate by phi about the origin, then
/// translate). Used by the frame-invariance tests and nowhere in the
/// error-frame path itself.
Pose2 transform_pose(const Pose2& p, double tx, double ty, double phi);
PathBuffer transform_path(const PathBuffer& buffer, double tx, double ty, double phi);

}  // namespace tracklearn
