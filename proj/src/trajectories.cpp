#include "piwan/trajectories.hpp"

#include <cmath>

namespace piwan {

bool is_training_kind(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Circle:
    case TrajectoryKind::Ellipse:
    case TrajectoryKind::Lemniscate:
    case TrajectoryKind::TransposedLemniscate:
    case TrajectoryKind::Spiral:
      return true;
    case TrajectoryKind::WarpedEllipse:
    case TrajectoryKind::ExtendedLemniscate:
      return false;
  }
  throw UnknownKind("is_training_kind: invalid trajectory kind");
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Circle: return "circle";
    case TrajectoryKind::Ellipse: return "ellipse";
    case TrajectoryKind::Lemniscate: return "lemniscate";
    case TrajectoryKind::TransposedLemniscate: return "lemniscate_t";
    case TrajectoryKind::Spiral: return "spiral";
    case TrajectoryKind::WarpedEllipse: return "warped_ellipse";
    case TrajectoryKind::ExtendedLemniscate: return "lemniscate_e";
  }
  throw UnknownKind("to_string: invalid trajectory kind");
}

TrajectoryKind trajectory_kind_from_string(const std::string& name) {
  for (TrajectoryKind kind : kAllTrajectoryKinds) {
    if (to_string(kind) == name) return kind;
  }
  throw UnknownKind("unknown trajectory kind: " + name);
}

namespace {

void validate(const Trajectory& traj, double t) {
  if (!(traj.radius_x > 0.0) || !(traj.radius_y > 0.0) || !(traj.height > 0.0) ||
      !(traj.angular_rate > 0.0)) {
    throw Error("trajectory shape parameters a, b, h, ω_t must be positive");
  }
  if (t < 0.0) throw Error("trajectory time must be non-negative");
}

}  // namespace

ReferenceState sample(const Trajectory& traj, double t) {
  validate(traj, t);
  const double a = traj.radius_x;
  const double b = traj.radius_y;
  const double h = traj.height;
  const double w = traj.angular_rate;
  const double c = std::cos(w * t);
  const double s = std::sin(w * t);
  const double c2 = std::cos(2.0 * w * t);
  const double s2 = std::sin(2.0 * w * t);

  ReferenceState ref;
  switch (traj.kind) {
    case TrajectoryKind::Circle:
      ref.p_r = Vec3{a * c, a * s, h};
      ref.v_r = Vec3{-a * w * s, a * w * c, 0.0};
      break;
    case TrajectoryKind::Ellipse:
      ref.p_r = Vec3{a * c, b * s, h};
      ref.v_r = Vec3{-a * w * s, b * w * c, 0.0};
      break;
    case TrajectoryKind::Lemniscate:
      // Gerono figure-eight: y = a sin cos = (a/2) sin 2ωt.
      ref.p_r = Vec3{a * c, a * s * c, h};
      ref.v_r = Vec3{-a * w * s, a * w * c2, 0.0};
      break;
    case TrajectoryKind::TransposedLemniscate:
      ref.p_r = Vec3{a * s * c, a * c, h};
      ref.v_r = Vec3{a * w * c2, -a * w * s, 0.0};
      break;
    case TrajectoryKind::Spiral:
      ref.p_r = Vec3{a * c, a * s, h + traj.climb_rate * t};
      ref.v_r = Vec3{-a * w * s, a * w * c, traj.climb_rate};
      break;
    case TrajectoryKind::WarpedEllipse:
      ref.p_r = Vec3{a * c, b * s, h + traj.warp_amplitude * s2};
      ref.v_r = Vec3{-a * w * s, b * w * c, 2.0 * traj.warp_amplitude * w * c2};
      break;
    case TrajectoryKind::ExtendedLemniscate: {
      const double ae = 1.5 * a;
      ref.p_r = Vec3{ae * c, ae * s * c, h + traj.warp_amplitude * s};
      ref.v_r = Vec3{-ae * w * s, ae * w * c2, traj.warp_amplitude * w * c};
      break;
    }
    default:
      throw UnknownKind("sample: invalid trajectory kind");
  }
  ref.q_r = Quat::identity();
  ref.omega_r = Vec3::Zero();
  ref.t_mn_r = kGravity;
  return ref;
}

std::vector<ReferenceState> horizon(const Trajectory& traj, double t0, int steps, double dt) {
  if (steps < 1) throw Error("horizon: steps must be >= 1");
  std::vector<ReferenceState> refs;
  refs.reserve(steps + 1);
  for (int k = 0; k <= steps; ++k) refs.push_back(sample(traj, t0 + k * dt));
  return refs;
}

}  // namespace piwan
