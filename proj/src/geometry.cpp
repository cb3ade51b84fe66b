#include "tracklearn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tracklearn {

double wrap_angle(double a) {
  if (!std::isfinite(a)) throw std::domain_error("wrap_angle: non-finite angle");
  double w = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (w <= -kPi) w += 2.0 * kPi;            // map -pi to +pi
  return w;
}

Pose2::Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}

const char* to_string(SourceTag tag) {
  return tag == SourceTag::Virtual ? "virtual" : "reallog";
}

SourceTag source_tag_from_string(const std::string_view s) {
  if (s == "virtual") return SourceTag::Virtual;
  if (s == "reallog") return SourceTag::RealLog;
  throw std::domain_error("unknown source tag: " + std::string(s));
}

PathBuffer::PathBuffer(std::vector<PathPoint> pts, SourceTag tag)
    : points(std::move(pts)), source_tag(tag) {
  validate();
}

void PathBuffer::validate() const {
  if (points.size() < 2) throw std::domain_error("PathBuffer: fewer than 2 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const PathPoint& p = points[i];
    if (!std::isfinite(p.t) || !std::isfinite(p.pose.x) || !std::isfinite(p.pose.y) ||
        !std::isfinite(p.pose.theta) || !std::isfinite(p.speed)) {
      throw std::domain_error("PathBuffer: non-finite sample at index " + std::to_string(i));
    }
    if (p.speed < 0.0) throw std::domain_error("PathBuffer: negative speed at index " + std::to_string(i));
    if (i > 0) {
      if (points[i].t <= points[i - 1].t)
        throw std::domain_error("PathBuffer: timestamps not strictly increasing at index " +
                                std::to_string(i));
      const double dx = points[i].pose.x - points[i - 1].pose.x;
      const double dy = points[i].pose.y - points[i - 1].pose.y;
      if (dx == 0.0 && dy == 0.0)
        throw std::domain_error("PathBuffer: zero-length segment at index " + std::to_string(i));
    }
  }
}

namespace {

// Agent's longitudinal coordinate in the candidate point's frame. The
// candidate still counts as "next" while this is <= 0 (agent not yet past it).
double along_in_frame(const PathPoint& p, const Pose2& agent) {
  const double c = std::cos(p.pose.theta);
  const double s = std::sin(p.pose.theta);
  return c * (agent.x - p.pose.x) + s * (agent.y - p.pose.y);
}

std::size_t scan_next(const PathBuffer& buffer, const Pose2& agent, std::size_t lo, std::size_t hi,
                      bool* found) {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  *found = false;
  for (std::size_t i = lo; i < hi; ++i) {
    const PathPoint& p = buffer.points[i];
    if (along_in_frame(p, agent) > 0.0) continue;  // agent already passed this point
    const double dx = agent.x - p.pose.x;
    const double dy = agent.y - p.pose.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
      *found = true;
    }
  }
  return best;
}

}  // namespace

std::size_t closest_next_point(const PathBuffer& buffer, const Pose2& agent,
                               std::optional<std::size_t> hint) {
  const std::size_t n = buffer.points.size();
  if (n == 0) throw std::domain_error("closest_next_point: empty buffer");
  if (hint && *hint >= n) throw std::domain_error("closest_next_point: hint out of range");

  constexpr std::size_t kWindow = 50;
  bool found = false;
  if (hint) {
    const std::size_t lo = *hint > kWindow ? *hint - kWindow : 0;
    const std::size_t hi = std::min(n, *hint + kWindow + 1);
    const std::size_t idx = scan_next(buffer, agent, lo, hi, &found);
    if (found) return idx;
  }
  const std::size_t idx = scan_next(buffer, agent, 0, n, &found);
  return found ? idx : n - 1;
}

ErrorState error_state(const PathBuffer& buffer, const Pose2& agent, std::size_t idx) {
  if (idx >= buffer.points.size()) throw std::domain_error("error_state: index out of range");
  const PathPoint& ref = buffer.points[idx];
  const double c = std::cos(ref.pose.theta);
  const double s = std::sin(ref.pose.theta);
  const double rx = agent.x - ref.pose.x;
  const double ry = agent.y - ref.pose.y;
  ErrorState es;
  es.dx_long = c * rx + s * ry;
  es.eps_d = -s * rx + c * ry;
  es.eps_theta = wrap_angle(agent.theta - ref.pose.theta);
  es.ref_index = idx;
  es.ref_speed = ref.speed;
  return es;
}

namespace {

double interp_theta(double a, double b, double u) {
  // Unit-vector interpolation avoids the branch cut at +/-pi.
  const double cx = (1.0 - u) * std::cos(a) + u * std::cos(b);
  const double cy = (1.0 - u) * std::sin(a) + u * std::sin(b);
  if (cx == 0.0 && cy == 0.0) return wrap_angle(a + u * wrap_angle(b - a));
  return std::atan2(cy, cx);
}

}  // namespace

PathBuffer resample_path(const PathBuffer& buffer, double dt) {
  if (buffer.points.size() < 2) throw std::domain_error("resample_path: fewer than 2 points");
  if (!(dt > 0.0)) throw std::domain_error("resample_path: dt must be positive");
  buffer.validate();

  const double t0 = buffer.points.front().t;
  const double t_end = buffer.points.back().t;
  const std::size_t count = static_cast<std::size_t>(std::floor((t_end - t0) / dt + 1e-9)) + 1;

  std::vector<PathPoint> out;
  out.reserve(count);
  std::size_t seg = 0;  // current segment [seg, seg+1]
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    while (seg + 2 < buffer.points.size() && buffer.points[seg + 1].t <= t) ++seg;
    const PathPoint& a = buffer.points[seg];
    const PathPoint& b = buffer.points[seg + 1];
    const double u = (t - a.t) / (b.t - a.t);
    PathPoint p;
    if (u <= 0.0) {
      p = a;
      p.t = t;
    } else if (u >= 1.0) {
      p = b;
      p.t = t;
    } else {
      p.t = t;
      p.pose.x = a.pose.x + u * (b.pose.x - a.pose.x);
      p.pose.y = a.pose.y + u * (b.pose.y - a.pose.y);
      p.pose.theta = interp_theta(a.pose.theta, b.pose.theta, u);
      p.speed = a.speed + u * (b.speed - a.speed);
    }
    out.push_back(p);
  }
  return PathBuffer(std::move(out), buffer.source_tag);
}

Pose2 transform_pose(const Pose2& p, double tx, double ty, double phi) {
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  return Pose2(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, wrap_angle(p.theta + phi));
}

PathBuffer transform_path(const PathBuffer& buffer, double tx, double ty, double phi) {
  PathBuffer out = buffer;
  for (PathPoint& p : out.points) p.pose = transform_pose(p.pose, tx, ty, phi);
  return out;
}

}  // namespace tracklearn
